// Integration acceptance suite. Each numbered criterion prints one
// [PASS]/[FAIL] line; the process exit code is the number of failures.
//
// Criteria 4-9 and 11 share a single default-config pipeline session so the
// expensive stages (victim, shadow ensemble, generator) are trained once.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "miaudit/attacks.hpp"
#include "miaudit/discredit.hpp"
#include "miaudit/errors.hpp"
#include "miaudit/experiment.hpp"
#include "miaudit/metrics.hpp"
#include "miaudit/rng.hpp"
#include "oracles.hpp"

using namespace miaudit;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what, const std::string& detail) {
    std::printf("[%s] C%d: %s — %s\n", pass ? "PASS" : "FAIL", criterion, what.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

// ---------------------------------------------------------------- C1
void criterion_gradients() {
    Timer timer;
    double worst_param = 0.0, worst_input = 0.0;
    Rng pick(2026);
    for (int probe = 0; probe < 100; ++probe) {
        std::uint64_t seed = 900 + static_cast<std::uint64_t>(probe);
        tinynn::DenseNet net = tinynn::make_net({6, 9, 7, 4}, seed);
        Matrix batch = oracles::random_matrix(6, 6, seed + 1);
        auto labels = oracles::random_labels(6, 4, seed + 2);

        auto grads = tinynn::param_gradients(net, batch, labels);
        for (int k = 0; k < 4; ++k) {
            std::size_t layer = pick.below(net.num_layers());
            bool bias = pick.bernoulli_half();
            std::size_t count = bias ? net.biases[layer].size() : net.weights[layer].data().size();
            std::size_t idx = pick.below(count);
            double analytic = bias ? grads.biases[layer][idx] : grads.weights[layer].data()[idx];
            double fd = oracles::fd_param_gradient(net, layer, bias, idx, batch, labels);
            worst_param = std::max(worst_param, oracles::rel_err(analytic, fd));
        }

        std::vector<double> x(6), target(7);
        Rng rng(seed + 3);
        for (double& v : x) v = rng.uniform(0.05, 0.95);
        for (double& v : target) v = rng.uniform(-0.5, 0.5);
        auto g = tinynn::grad_wrt_input(net, x, target);
        for (int k = 0; k < 3; ++k) {
            std::size_t idx = pick.below(x.size());
            double fd = oracles::fd_input_gradient(net, x, target, idx);
            worst_input = std::max(worst_input, oracles::rel_err(g[idx], fd));
        }
    }
    double elapsed = timer.seconds();
    bool pass = worst_param < 1e-4 && worst_input < 1e-4 && elapsed < 30.0;
    report(1, pass, "gradients match central finite differences",
           "max rel err params " + fmt(worst_param) + ", inputs " + fmt(worst_input) + ", " + fmt(elapsed) +
               " s over 100 probes");
}

// ---------------------------------------------------------------- C2
void criterion_auc_oracle() {
    Timer timer;
    int exact = 0, total = 0;
    Rng rng(515);
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t n = 10 + rng.below(991); // up to 1000 samples
        std::vector<double> scores(n);
        std::vector<std::uint8_t> members(n);
        bool has0 = false, has1 = false;
        double quant = 5.0 + static_cast<double>(rng.below(200));
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = std::round(rng.uniform() * quant) / quant; // fractional grid forces ties
            members[i] = rng.bernoulli_half() ? 1 : 0;
            (members[i] ? has1 : has0) = true;
        }
        if (!has0 || !has1) continue;
        ++total;
        if (metrics::roc(scores, members).auc == oracles::brute_force_auc(scores, members)) ++exact;
    }
    double elapsed = timer.seconds();
    bool pass = exact == total && elapsed < 30.0;
    report(2, pass, "ROC AUC equals brute-force pair counting exactly",
           std::to_string(exact) + "/" + std::to_string(total) + " exact, " + fmt(elapsed) + " s");
}

// ---------------------------------------------------------------- C10
void criterion_carlini_analytic() {
    using attacks::CarliniVariant;
    bool zero_ok = true;
    for (double phi : {-5.0, -1.0, 0.0, 0.5, 3.0, 20.0})
        zero_ok = zero_ok &&
                  attacks::carlini_score_from_stats(phi, 1.2, 0.8, 1.2, 0.8, CarliniVariant::online) == 0.0;
    double sep = attacks::carlini_score_from_stats(2.0, 2.0, 1.0, 0.0, 1.0, CarliniVariant::online);
    bool sep_ok = std::abs(sep - 2.0) < 1e-12;
    report(10, zero_ok && sep_ok, "carlini analytic checks",
           "identical-gaussian score 0 everywhere: " + std::string(zero_ok ? "yes" : "no") +
               ", unit-separation online score " + fmt(sep));
}

// ---------------------------------------------------------------- C11 (analytic half)
bool criterion_pgd_analytic() {
    auto encoder = oracles::identity_encoder(1);
    std::vector<double> target = {0.6};
    std::vector<double> start = {0.5};
    discredit::PgdConfig cfg;
    cfg.step = 1.0;
    cfg.iters = 64;
    cfg.epsilon = 0.05;
    auto r = discredit::pgd_latent_match(encoder, target, start, cfg, start);
    return std::abs(r.best[0] - 0.55) < 1e-9;
}

struct SweepResult {
    std::vector<double> fprs;
    int inversions = 0;
};

SweepResult sweep(cli::Session& session, attacks::AttackId id, const std::vector<std::size_t>& values,
                  bool vary_nc, std::size_t fixed, double threshold) {
    SweepResult out;
    for (std::size_t v : values) {
        auto dd = session.build_discrediting(id, discredit::DiscreditMethod::search, vary_nc ? v : fixed,
                                             vary_nc ? fixed : v);
        auto scores = session.score_discrediting(id, dd);
        std::size_t fp = 0;
        for (double s : scores.scores)
            if (s >= threshold) ++fp;
        out.fprs.push_back(static_cast<double>(fp) / static_cast<double>(dd.size()));
    }
    for (std::size_t i = 1; i < out.fprs.size(); ++i)
        if (out.fprs[i] > out.fprs[i - 1] + 1e-12) ++out.inversions;
    return out;
}

std::string join(const std::vector<double>& v) {
    std::string s;
    for (double x : v) s += (s.empty() ? "" : ", ") + fmt(x);
    return s;
}

} // namespace

int main() {
    criterion_gradients();
    criterion_auc_oracle();

    // Shared default pipeline for the end-to-end criteria.
    cli::ExperimentConfig cfg = cli::default_config();
    cli::Session session(cfg);

    // ------------------------------------------------------------ C4
    Timer t4;
    const auto& report4 = session.victim_report();
    double train_time = t4.seconds();
    {
        bool pass = report4.train_accuracy >= 0.95 &&
                    report4.test_accuracy <= report4.train_accuracy - 0.15 && train_time < 300.0;
        report(4, pass, "default pipeline reaches the overfit regime",
               "train " + fmt(report4.train_accuracy) + ", test " + fmt(report4.test_accuracy) + ", gap " +
                   fmt(report4.train_accuracy - report4.test_accuracy) + ", " + fmt(train_time) + " s");
    }

    // ------------------------------------------------------------ C3
    {
        const auto& c = session.candidates();
        auto sv = attacks::score_gap(session.victim(), c.samples, c.labels, c.ids);
        double tp = 0, tn = 0, p = 0, n = 0;
        for (std::size_t i = 0; i < sv.scores.size(); ++i) {
            if (c.is_member[i]) {
                p += 1.0;
                if (sv.scores[i] == 1.0) tp += 1.0;
            } else {
                n += 1.0;
                if (sv.scores[i] == 0.0) tn += 1.0;
            }
        }
        double balanced = (tp / p + tn / n) / 2.0;
        double identity = (report4.train_accuracy + 1.0 - report4.test_accuracy) / 2.0;
        bool pass = std::abs(balanced - identity) < 1e-12;
        report(3, pass, "gap balanced accuracy equals (train + 1 - test)/2",
               "balanced " + fmt(balanced) + " vs identity " + fmt(identity) + ", diff " +
                   fmt(std::abs(balanced - identity)));
    }

    // ------------------------------------------------------------ C5
    Timer t5;
    {
        const auto& c = session.candidates();
        double auc_y, auc_w, auc_c;
        double tpr_y, tpr_w, tpr_c;
        auto tpr_at_min_fpr = [&](const metrics::RocCurve& curve) {
            double best_fpr = 2.0, tpr = 0.0;
            for (std::size_t i = 0; i < curve.fpr.size(); ++i) {
                if (curve.fpr[i] <= 0.0) continue;
                if (curve.fpr[i] < best_fpr || (curve.fpr[i] == best_fpr && curve.tpr[i] > tpr)) {
                    best_fpr = curve.fpr[i];
                    tpr = curve.tpr[i];
                }
            }
            return tpr;
        };
        {
            auto curve = metrics::roc(session.candidate_scores(attacks::AttackId::yeom).scores, c.is_member);
            auc_y = curve.auc;
            tpr_y = tpr_at_min_fpr(curve);
        }
        {
            auto curve = metrics::roc(session.candidate_scores(attacks::AttackId::watson).scores, c.is_member);
            auc_w = curve.auc;
            tpr_w = tpr_at_min_fpr(curve);
        }
        {
            auto curve = metrics::roc(session.candidate_scores(attacks::AttackId::carlini).scores, c.is_member);
            auc_c = curve.auc;
            tpr_c = tpr_at_min_fpr(curve);
        }
        double elapsed = t5.seconds();
        bool pass = auc_y > 0.55 && auc_w > 0.55 && auc_c > 0.55 && tpr_w > 0.0 && tpr_c > 0.0 &&
                    tpr_y <= tpr_w && tpr_y <= tpr_c && elapsed < 600.0;
        report(5, pass, "attack sanity: AUC and low-FPR ordering",
               "AUC y/w/c " + fmt(auc_y) + "/" + fmt(auc_w) + "/" + fmt(auc_c) + "; TPR@minFPR y/w/c " +
                   fmt(tpr_y) + "/" + fmt(tpr_w) + "/" + fmt(tpr_c) + "; " + fmt(elapsed) + " s with 32 shadows");
    }

    // ------------------------------------------------------------ C6 + C11
    Timer t6;
    {
        bool pass6 = true;
        std::string detail;
        bool pgd_monotone = true;
        std::size_t emitted = 0;
        for (auto id : {attacks::AttackId::watson, attacks::AttackId::carlini}) {
            for (auto method : {discredit::DiscreditMethod::search, discredit::DiscreditMethod::adversarial}) {
                auto dd = session.build_discrediting(id, method, 25, 3);
                auto dd_scores = session.score_discrediting(id, dd);
                auto rep = metrics::ratio_at_min_fpr(session.eval_scores(id), dd_scores.scores,
                                                     session.member_scores(id));
                bool ok = rep.ratio >= 10.0;
                pass6 = pass6 && ok;
                detail += attacks::attack_name(id) + "/" + discredit::method_name(method) + " x" +
                          (std::isinf(rep.ratio) ? "inf" : fmt(rep.ratio)) + (ok ? " " : "(<10) ");
                if (method == discredit::DiscreditMethod::adversarial) {
                    for (const auto& prov : dd.provenance) {
                        ++emitted;
                        if (prov.final_mse > prov.initial_mse) pgd_monotone = false;
                    }
                }
            }
        }
        double elapsed = t6.seconds();
        pass6 = pass6 && elapsed < 600.0;
        report(6, pass6, "search and adversarial discrediting inflate FPR at least tenfold",
               detail + "in " + fmt(elapsed) + " s");

        bool pgd_analytic = criterion_pgd_analytic();
        report(11, pgd_monotone && pgd_analytic, "PGD best-iterate and analytic convergence",
               "best<=initial on " + std::to_string(emitted) + "/" + std::to_string(emitted) +
                   " emitted samples; 1-D boundary case " + (pgd_analytic ? "converged" : "missed"));
    }

    // ------------------------------------------------------------ C7
    {
        bool pass = true;
        std::string detail;
        auto pool_dd = discredit::pool_as_discrediting(session.dataset(), session.split().public_pool_ids);
        for (auto id : {attacks::AttackId::watson, attacks::AttackId::carlini}) {
            auto dd_scores = session.score_discrediting(id, pool_dd);
            auto rep = metrics::ratio_at_min_fpr(session.eval_scores(id), dd_scores.scores,
                                                 session.member_scores(id));
            bool ok = rep.ratio <= 2.0;
            pass = pass && ok;
            detail += attacks::attack_name(id) + " x" + fmt(rep.ratio) + (ok ? " " : "(>2) ");
        }
        report(7, pass, "unselected pool as challenge set does not discredit", detail);
    }

    // ------------------------------------------------------------ C8 + C9a
    {
        const auto& c = session.candidates();
        const auto& sv = session.candidate_scores(attacks::AttackId::watson);
        std::vector<std::size_t> member_rows;
        for (std::size_t i = 0; i < c.ids.size(); ++i)
            if (c.is_member[i]) member_rows.push_back(i);
        std::sort(member_rows.begin(), member_rows.end(),
                  [&](std::size_t a, std::size_t b) { return sv.scores[a] > sv.scores[b]; });
        member_rows.resize(50);

        Matrix member_latents = tinynn::encode(session.victim(), c.samples.select_rows(member_rows));
        double sigma = session.generate_noise_sigma();
        const auto& gen = session.generator();

        std::vector<std::vector<double>> rows;
        std::vector<int> labels;
        std::vector<double> h1_member_scores, h2_dist;
        std::vector<std::size_t> h1_index, h2_index;
        std::vector<double> h2_member_scores;
        std::uint64_t seed = derive_seed(session.config().seed, "acceptance-hyp");
        for (std::size_t mi = 0; mi < member_rows.size(); ++mi) {
            std::size_t row = member_rows[mi];
            Rng rng(derive_seed(seed, "h1", c.ids[row]));
            std::size_t accepted = 0;
            for (int attempt = 0; attempt < 16 && accepted < 4; ++attempt) {
                Matrix z(1, member_latents.cols());
                for (std::size_t d = 0; d < z.cols(); ++d)
                    z(0, d) = member_latents(mi, d) + rng.normal(0.0, sigma);
                Matrix probe = gen.generate(z);
                if (tinynn::predict(session.victim(), probe)[0] != c.labels[row]) continue;
                h1_index.push_back(rows.size());
                rows.emplace_back(probe.row(0).begin(), probe.row(0).end());
                labels.push_back(c.labels[row]);
                h1_member_scores.push_back(sv.scores[row]);
                ++accepted;
            }
            Rng rng2(derive_seed(seed, "h2", c.ids[row]));
            for (double scale : {0.05, 0.1, 0.2, 0.5, 1.0}) {
                for (int rep = 0; rep < 2; ++rep) {
                    Matrix z(1, member_latents.cols());
                    for (std::size_t d = 0; d < z.cols(); ++d)
                        z(0, d) = member_latents(mi, d) + rng2.normal(0.0, sigma / 0.1 * scale);
                    Matrix probe = gen.generate(z);
                    if (tinynn::predict(session.victim(), probe)[0] != c.labels[row]) continue;
                    double dist = discredit::cosine_distance(member_latents.row(mi),
                                                             tinynn::encode(session.victim(), probe).row(0));
                    h2_index.push_back(rows.size());
                    rows.emplace_back(probe.row(0).begin(), probe.row(0).end());
                    labels.push_back(c.labels[row]);
                    h2_dist.push_back(dist);
                    h2_member_scores.push_back(sv.scores[row]);
                }
            }
        }
        Matrix probes_x(rows.size(), session.dataset().dim());
        for (std::size_t i = 0; i < rows.size(); ++i)
            std::copy(rows[i].begin(), rows[i].end(), probes_x.row(i).begin());
        std::vector<std::uint32_t> ids(rows.size());
        for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::uint32_t>(0x60000000u + i);
        auto ctx = session.context(attacks::AttackId::watson);
        auto probe_scores = attacks::score_with(attacks::AttackId::watson, ctx, probes_x, labels, ids);

        std::vector<double> xs, ys;
        for (std::size_t k = 0; k < h1_index.size(); ++k) {
            xs.push_back(h1_member_scores[k]);
            ys.push_back(probe_scores.scores[h1_index[k]]);
        }
        double r1 = xs.size() >= 3 ? metrics::pearson(xs, ys) : 0.0;
        report(8, r1 > 0.2, "membership score transfers to generated neighbors",
               "pearson " + fmt(r1) + " over " + std::to_string(xs.size()) + " pairs");

        std::vector<double> dx, dy;
        for (std::size_t k = 0; k < h2_index.size(); ++k) {
            dx.push_back(h2_dist[k]);
            dy.push_back(std::abs(h2_member_scores[k] - probe_scores.scores[h2_index[k]]));
        }
        double r2 = dx.size() >= 3 ? metrics::pearson(dx, dy) : 0.0;

        // C9b/C9c: monotone FPR trends over n_c and neighbor rank
        std::vector<double> evals = session.eval_scores(attacks::AttackId::watson);
        std::sort(evals.begin(), evals.end(), std::greater<>());
        std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(evals.size() * 0.0001));
        double threshold = evals[k - 1];

        auto nc = sweep(session, attacks::AttackId::watson, {10, 25, 50, 100}, true, 3, threshold);
        auto nn = sweep(session, attacks::AttackId::watson, {1, 2, 3, 5}, false, 25, threshold);
        bool pass9 = r2 > 0.0 && nc.inversions <= 1 && nn.inversions <= 1;
        report(9, pass9, "distance-score correlation and sweep trends",
               "corr(dist,|dScore|) " + fmt(r2) + "; n_c sweep FPR [" + join(nc.fprs) + "] (" +
                   std::to_string(nc.inversions) + " inversions); n_n sweep FPR [" + join(nn.fprs) + "] (" +
                   std::to_string(nn.inversions) + " inversions)");
    }

    criterion_carlini_analytic();

    // ------------------------------------------------------------ C12
    {
        cli::ExperimentConfig tiny = cli::default_config();
        tiny.seed = 5;
        tiny.data.synthetic.samples_per_subpop = 60;
        tiny.data.synthetic.dim = 16;
        tiny.data.synthetic.subpops_per_class = 2;
        tiny.model.victim_hidden = {32};
        tiny.model.train.epochs = 10;
        tiny.model.train.decay_epochs = {7};
        tiny.attacks_cfg.shadow_count = 4;
        tiny.attacks_cfg.shadow_train.epochs = 5;
        tiny.attacks_cfg.shadow_train.decay_epochs = {3};
        tiny.attacks_cfg.shokri.train.epochs = 3;
        tiny.attacks_cfg.shokri.train.decay_epochs = {2};
        tiny.generator.train.epochs = 8;
        tiny.generator.train.decay_epochs = {5, 7};
        tiny.discredit_cfg.n_c = 4;
        tiny.discredit_cfg.n_n = 2;
        tiny.discredit_cfg.pgd.iters = 8;

        auto slurp = [](const fs::path& p) {
            std::ifstream in(p, std::ios::binary);
            std::ostringstream ss;
            ss << in.rdbuf();
            return ss.str();
        };

        bool pass = true;
        std::string detail;
        for (const char* sub : {"gen-data", "audit"}) {
            fs::path d1 = fs::temp_directory_path() / ("miaudit_acc_det1_" + std::string(sub));
            fs::path d2 = fs::temp_directory_path() / ("miaudit_acc_det2_" + std::string(sub));
            fs::remove_all(d1);
            fs::remove_all(d2);
            tiny.output_dir = d1;
            int rc1 = cli::run_subcommand(sub, tiny);
            tiny.output_dir = d2;
            int rc2 = cli::run_subcommand(sub, tiny);
            std::size_t compared = 0;
            bool same = rc1 == 0 && rc2 == 0;
            if (same) {
                for (const auto& entry : fs::recursive_directory_iterator(d1)) {
                    if (!entry.is_regular_file()) continue;
                    auto rel = fs::relative(entry.path(), d1);
                    if (rel.filename() == "run_info.json") continue;
                    if (slurp(entry.path()) != slurp(d2 / rel)) same = false;
                    ++compared;
                }
            }
            pass = pass && same && compared > 0;
            detail += std::string(sub) + ": " + (same ? "identical" : "DIFFERS") + " (" +
                      std::to_string(compared) + " files) ";
            fs::remove_all(d1);
            fs::remove_all(d2);
        }
        report(12, pass, "repeated runs produce byte-identical artifacts", detail);
    }

    std::printf("%d/12 criteria passed\n", 12 - g_failures);
    return g_failures;
}
