// Command-line front end for the membership-inference discredibility toolkit.
//
// Each subcommand runs one experiment recipe end to end from a JSON config
// and writes its artifacts plus a manifest under the output directory.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "miaudit/errors.hpp"
#include "miaudit/experiment.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::string output_dir;
    std::vector<std::string> overrides;
    std::int64_t seed = -1;
    std::int64_t workers = -1;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("-c,--config", opts.config_path, "JSON config file (defaults apply when omitted)");
    cmd->add_option("-o,--out", opts.output_dir, "output directory (overrides config)");
    cmd->add_option("-s,--set", opts.overrides, "config override as dotted key=value, repeatable");
    cmd->add_option("--seed", opts.seed, "global seed (overrides config)");
    cmd->add_option("-j,--workers", opts.workers, "worker threads, 0 = all cores");
}

int run(const std::string& name, const CommonOpts& opts) {
    miaudit::cli::ExperimentConfig cfg;
    try {
        cfg = opts.config_path.empty() ? miaudit::cli::default_config()
                                       : miaudit::cli::load_config(opts.config_path);
        for (const auto& o : opts.overrides) miaudit::cli::apply_override(cfg, o);
        if (!opts.output_dir.empty()) cfg.output_dir = opts.output_dir;
        if (opts.seed >= 0) cfg.seed = static_cast<std::uint64_t>(opts.seed);
        if (opts.workers >= 0) cfg.workers = static_cast<std::size_t>(opts.workers);
    } catch (const std::exception& e) {
        std::cerr << R"({"error":{"type":"config","message":")" << e.what() << R"("}})" << "\n";
        return 2;
    }
    return miaudit::cli::run_subcommand(name, cfg);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"membership-inference privacy auditing and discredibility toolkit"};
    app.require_subcommand(1);

    struct Sub {
        const char* name;
        const char* help;
    };
    const Sub subs[] = {
        {"gen-data", "generate or ingest the dataset and write splits"},
        {"train", "train the victim, shadow ensemble and generator"},
        {"attack", "score all configured attacks and emit AUC/TPR summaries"},
        {"discredit", "build a discrediting dataset with the configured method"},
        {"fprfpr", "emit FPR-to-FPR curves and ratio reports"},
        {"audit", "run the full auditor/judge/auditee protocol"},
        {"hypotheses", "emit score-transfer scatter data, histograms and sweeps"},
        {"domain-shift", "control run: the unfiltered public pool as the challenge set"},
    };

    std::vector<std::pair<std::string, CommonOpts>> invocations;
    invocations.reserve(std::size(subs));
    for (const auto& sub : subs) {
        auto* cmd = app.add_subcommand(sub.name, sub.help);
        invocations.emplace_back(sub.name, CommonOpts{});
        add_common(cmd, invocations.back().second);
        cmd->callback([&, idx = invocations.size() - 1] {
            std::exit(run(invocations[idx].first, invocations[idx].second));
        });
    }

    CLI11_PARSE(app, argc, argv);
    return 0;
}
