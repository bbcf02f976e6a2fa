#include "miaudit/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "miaudit/errors.hpp"
#include "miaudit/rng.hpp"

namespace miaudit::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kScoreSlots = 6;

std::size_t slot_of(attacks::AttackId id) { return static_cast<std::size_t>(id); }

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError("config: " + path + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed)
            if (it.key() == a) ok = true;
        if (!ok) throw ConfigError("config: unknown key '" + path + "." + it.key() + "'");
    }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void parse_train(const json& j, const std::string& path, tinynn::TrainConfig& cfg) {
    check_keys(j, path, {"learning_rate", "decay_factor", "decay_epochs", "epochs", "batch_size"});
    maybe(j, "learning_rate", cfg.learning_rate);
    maybe(j, "decay_factor", cfg.decay_factor);
    maybe(j, "decay_epochs", cfg.decay_epochs);
    maybe(j, "epochs", cfg.epochs);
    maybe(j, "batch_size", cfg.batch_size);
}

json train_to_json(const tinynn::TrainConfig& cfg) {
    return {{"learning_rate", cfg.learning_rate},
            {"decay_factor", cfg.decay_factor},
            {"decay_epochs", cfg.decay_epochs},
            {"epochs", cfg.epochs},
            {"batch_size", cfg.batch_size}};
}

void parse_config_json(const json& j, ExperimentConfig& cfg) {
    check_keys(j, "", {"seed", "workers", "output_dir", "data", "model", "attacks", "generator", "discredit",
                       "judge", "hypotheses"});
    maybe(j, "seed", cfg.seed);
    maybe(j, "workers", cfg.workers);
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();

    if (j.contains("data")) {
        const json& d = j.at("data");
        check_keys(d, "data", {"source", "synthetic", "idx", "fractions"});
        maybe(d, "source", cfg.data.source);
        if (cfg.data.source != "synthetic" && cfg.data.source != "idx")
            throw ConfigError("config: data.source must be 'synthetic' or 'idx'");
        if (d.contains("synthetic")) {
            const json& s = d.at("synthetic");
            check_keys(s, "data.synthetic",
                       {"classes", "subpops_per_class", "dim", "cluster_spread", "center_spread",
                        "samples_per_subpop"});
            maybe(s, "classes", cfg.data.synthetic.classes);
            maybe(s, "subpops_per_class", cfg.data.synthetic.subpops_per_class);
            maybe(s, "dim", cfg.data.synthetic.dim);
            maybe(s, "cluster_spread", cfg.data.synthetic.cluster_spread);
            maybe(s, "center_spread", cfg.data.synthetic.center_spread);
            maybe(s, "samples_per_subpop", cfg.data.synthetic.samples_per_subpop);
        }
        if (d.contains("idx")) {
            const json& x = d.at("idx");
            check_keys(x, "data.idx", {"images", "labels", "kmeans_per_class", "kmeans_iters"});
            if (x.contains("images")) cfg.data.idx_images = x.at("images").get<std::string>();
            if (x.contains("labels")) cfg.data.idx_labels = x.at("labels").get<std::string>();
            maybe(x, "kmeans_per_class", cfg.data.idx_kmeans_per_class);
            maybe(x, "kmeans_iters", cfg.data.idx_kmeans_iters);
        }
        if (d.contains("fractions")) {
            const json& f = d.at("fractions");
            check_keys(f, "data.fractions", {"member", "auditor_train", "nonmember_eval", "public_pool"});
            maybe(f, "member", cfg.data.fractions.member);
            maybe(f, "auditor_train", cfg.data.fractions.auditor_train);
            maybe(f, "nonmember_eval", cfg.data.fractions.nonmember_eval);
            maybe(f, "public_pool", cfg.data.fractions.public_pool);
        }
    }
    if (j.contains("model")) {
        const json& m = j.at("model");
        check_keys(m, "model", {"victim_hidden", "train"});
        maybe(m, "victim_hidden", cfg.model.victim_hidden);
        if (m.contains("train")) parse_train(m.at("train"), "model.train", cfg.model.train);
    }
    if (j.contains("attacks")) {
        const json& a = j.at("attacks");
        check_keys(a, "attacks",
                   {"enabled", "shadow_count", "shadow_mode", "shadow_train", "carlini_variant", "shokri",
                    "rezaei"});
        if (a.contains("enabled")) {
            cfg.attacks_cfg.enabled.clear();
            for (const auto& name : a.at("enabled"))
                cfg.attacks_cfg.enabled.push_back(attacks::attack_from_name(name.get<std::string>()));
        }
        maybe(a, "shadow_count", cfg.attacks_cfg.shadow_count);
        if (a.contains("shadow_mode")) {
            std::string mode = a.at("shadow_mode").get<std::string>();
            if (mode == "paired")
                cfg.attacks_cfg.shadow_mode = zoo::ShadowMode::paired;
            else if (mode == "out_only")
                cfg.attacks_cfg.shadow_mode = zoo::ShadowMode::out_only;
            else
                throw ConfigError("config: attacks.shadow_mode must be 'paired' or 'out_only'");
        }
        if (a.contains("shadow_train")) parse_train(a.at("shadow_train"), "attacks.shadow_train",
                                                    cfg.attacks_cfg.shadow_train);
        if (a.contains("carlini_variant")) {
            std::string v = a.at("carlini_variant").get<std::string>();
            if (v == "online")
                cfg.attacks_cfg.carlini_variant = attacks::CarliniVariant::online;
            else if (v == "offline")
                cfg.attacks_cfg.carlini_variant = attacks::CarliniVariant::offline;
            else
                throw ConfigError("config: attacks.carlini_variant must be 'online' or 'offline'");
        }
        if (a.contains("shokri")) {
            const json& s = a.at("shokri");
            check_keys(s, "attacks.shokri", {"hidden", "per_class", "holdout_fraction", "train"});
            maybe(s, "hidden", cfg.attacks_cfg.shokri.hidden);
            maybe(s, "per_class", cfg.attacks_cfg.shokri.per_class);
            maybe(s, "holdout_fraction", cfg.attacks_cfg.shokri.holdout_fraction);
            if (s.contains("train")) parse_train(s.at("train"), "attacks.shokri.train",
                                                 cfg.attacks_cfg.shokri.train);
        }
        if (a.contains("rezaei")) {
            const json& r = a.at("rezaei");
            check_keys(r, "attacks.rezaei", {"source", "probe_count", "sigma_scale", "min_probes"});
            if (r.contains("source")) {
                std::string src = r.at("source").get<std::string>();
                if (src == "generator")
                    cfg.attacks_cfg.rezaei.source = attacks::RezaeiSource::generator;
                else if (src == "pool")
                    cfg.attacks_cfg.rezaei.source = attacks::RezaeiSource::pool;
                else
                    throw ConfigError("config: attacks.rezaei.source must be 'generator' or 'pool'");
            }
            maybe(r, "probe_count", cfg.attacks_cfg.rezaei.probe_count);
            maybe(r, "sigma_scale", cfg.attacks_cfg.rezaei.sigma_scale);
            maybe(r, "min_probes", cfg.attacks_cfg.rezaei.min_probes);
        }
    }
    if (j.contains("generator")) {
        const json& g = j.at("generator");
        check_keys(g, "generator", {"hidden", "train"});
        maybe(g, "hidden", cfg.generator.hidden);
        if (g.contains("train")) parse_train(g.at("train"), "generator.train", cfg.generator.train);
    }
    if (j.contains("discredit")) {
        const json& d = j.at("discredit");
        check_keys(d, "discredit", {"attack", "method", "n_c", "n_n", "noise_sigma_scale", "pgd"});
        if (d.contains("attack"))
            cfg.discredit_cfg.attack = attacks::attack_from_name(d.at("attack").get<std::string>());
        if (d.contains("method"))
            cfg.discredit_cfg.method = discredit::method_from_name(d.at("method").get<std::string>());
        maybe(d, "n_c", cfg.discredit_cfg.n_c);
        maybe(d, "n_n", cfg.discredit_cfg.n_n);
        maybe(d, "noise_sigma_scale", cfg.discredit_cfg.noise_sigma_scale);
        if (d.contains("pgd")) {
            const json& p = d.at("pgd");
            check_keys(p, "discredit.pgd", {"step", "iters", "epsilon", "rule"});
            maybe(p, "step", cfg.discredit_cfg.pgd.step);
            maybe(p, "iters", cfg.discredit_cfg.pgd.iters);
            maybe(p, "epsilon", cfg.discredit_cfg.pgd.epsilon);
            if (p.contains("rule")) {
                std::string rule = p.at("rule").get<std::string>();
                if (rule == "sign")
                    cfg.discredit_cfg.pgd.rule = discredit::PgdStepRule::sign;
                else if (rule == "gradient")
                    cfg.discredit_cfg.pgd.rule = discredit::PgdStepRule::gradient;
                else
                    throw ConfigError("config: discredit.pgd.rule must be 'sign' or 'gradient'");
            }
        }
    }
    if (j.contains("judge")) {
        const json& jd = j.at("judge");
        check_keys(jd, "judge", {"required_max_fpr", "dismissal_ratio"});
        maybe(jd, "required_max_fpr", cfg.judge.required_max_fpr);
        maybe(jd, "dismissal_ratio", cfg.judge.dismissal_ratio);
    }
    if (j.contains("hypotheses")) {
        const json& h = j.at("hypotheses");
        check_keys(h, "hypotheses",
                   {"attack", "top_members", "neighbors_per_member", "mixed_sigma_scales", "n_c_sweep",
                    "n_n_sweep", "histogram_bins"});
        if (h.contains("attack"))
            cfg.hypotheses.attack = attacks::attack_from_name(h.at("attack").get<std::string>());
        maybe(h, "top_members", cfg.hypotheses.top_members);
        maybe(h, "neighbors_per_member", cfg.hypotheses.neighbors_per_member);
        maybe(h, "mixed_sigma_scales", cfg.hypotheses.mixed_sigma_scales);
        maybe(h, "n_c_sweep", cfg.hypotheses.n_c_sweep);
        maybe(h, "n_n_sweep", cfg.hypotheses.n_n_sweep);
        maybe(h, "histogram_bins", cfg.hypotheses.histogram_bins);
    }
}

json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["workers"] = cfg.workers;
    j["output_dir"] = cfg.output_dir.string();
    j["data"] = {{"source", cfg.data.source},
                 {"synthetic",
                  {{"classes", cfg.data.synthetic.classes},
                   {"subpops_per_class", cfg.data.synthetic.subpops_per_class},
                   {"dim", cfg.data.synthetic.dim},
                   {"cluster_spread", cfg.data.synthetic.cluster_spread},
                   {"center_spread", cfg.data.synthetic.center_spread},
                   {"samples_per_subpop", cfg.data.synthetic.samples_per_subpop}}},
                 {"idx",
                  {{"images", cfg.data.idx_images.string()},
                   {"labels", cfg.data.idx_labels.string()},
                   {"kmeans_per_class", cfg.data.idx_kmeans_per_class},
                   {"kmeans_iters", cfg.data.idx_kmeans_iters}}},
                 {"fractions",
                  {{"member", cfg.data.fractions.member},
                   {"auditor_train", cfg.data.fractions.auditor_train},
                   {"nonmember_eval", cfg.data.fractions.nonmember_eval},
                   {"public_pool", cfg.data.fractions.public_pool}}}};
    j["model"] = {{"victim_hidden", cfg.model.victim_hidden}, {"train", train_to_json(cfg.model.train)}};
    json enabled = json::array();
    for (auto id : cfg.attacks_cfg.enabled) enabled.push_back(attacks::attack_name(id));
    j["attacks"] = {
        {"enabled", enabled},
        {"shadow_count", cfg.attacks_cfg.shadow_count},
        {"shadow_mode", cfg.attacks_cfg.shadow_mode == zoo::ShadowMode::paired ? "paired" : "out_only"},
        {"shadow_train", train_to_json(cfg.attacks_cfg.shadow_train)},
        {"carlini_variant", cfg.attacks_cfg.carlini_variant == attacks::CarliniVariant::online ? "online"
                                                                                               : "offline"},
        {"shokri",
         {{"hidden", cfg.attacks_cfg.shokri.hidden},
          {"per_class", cfg.attacks_cfg.shokri.per_class},
          {"holdout_fraction", cfg.attacks_cfg.shokri.holdout_fraction},
          {"train", train_to_json(cfg.attacks_cfg.shokri.train)}}},
        {"rezaei",
         {{"source", cfg.attacks_cfg.rezaei.source == attacks::RezaeiSource::generator ? "generator" : "pool"},
          {"probe_count", cfg.attacks_cfg.rezaei.probe_count},
          {"sigma_scale", cfg.attacks_cfg.rezaei.sigma_scale},
          {"min_probes", cfg.attacks_cfg.rezaei.min_probes}}}};
    j["generator"] = {{"hidden", cfg.generator.hidden}, {"train", train_to_json(cfg.generator.train)}};
    j["discredit"] = {{"attack", attacks::attack_name(cfg.discredit_cfg.attack)},
                      {"method", discredit::method_name(cfg.discredit_cfg.method)},
                      {"n_c", cfg.discredit_cfg.n_c},
                      {"n_n", cfg.discredit_cfg.n_n},
                      {"noise_sigma_scale", cfg.discredit_cfg.noise_sigma_scale},
                      {"pgd",
                       {{"step", cfg.discredit_cfg.pgd.step},
                        {"iters", cfg.discredit_cfg.pgd.iters},
                        {"epsilon", cfg.discredit_cfg.pgd.epsilon},
                        {"rule", cfg.discredit_cfg.pgd.rule == discredit::PgdStepRule::sign ? "sign"
                                                                                            : "gradient"}}}};
    j["judge"] = {{"required_max_fpr", cfg.judge.required_max_fpr},
                  {"dismissal_ratio", cfg.judge.dismissal_ratio}};
    j["hypotheses"] = {{"attack", attacks::attack_name(cfg.hypotheses.attack)},
                       {"top_members", cfg.hypotheses.top_members},
                       {"neighbors_per_member", cfg.hypotheses.neighbors_per_member},
                       {"mixed_sigma_scales", cfg.hypotheses.mixed_sigma_scales},
                       {"n_c_sweep", cfg.hypotheses.n_c_sweep},
                       {"n_n_sweep", cfg.hypotheses.n_n_sweep},
                       {"histogram_bins", cfg.hypotheses.histogram_bins}};
    return j;
}

} // namespace

ExperimentConfig default_config() {
    ExperimentConfig cfg;
    cfg.model.train.epochs = 150;
    cfg.model.train.decay_epochs = {83, 125};

    cfg.attacks_cfg.enabled = {attacks::AttackId::gap,    attacks::AttackId::shokri, attacks::AttackId::yeom,
                               attacks::AttackId::watson, attacks::AttackId::carlini, attacks::AttackId::rezaei};
    // Shadows follow the victim's schedule: at matched convergence both
    // models clamp on easy samples, so the calibrated scores single out
    // victim-specific memorization rather than confidence-level gaps.
    cfg.attacks_cfg.shadow_train.epochs = 150;
    cfg.attacks_cfg.shadow_train.decay_epochs = {83, 125};

    cfg.attacks_cfg.shokri.train.epochs = 12;
    cfg.attacks_cfg.shokri.train.decay_epochs = {8};
    cfg.attacks_cfg.shokri.train.batch_size = 64;

    cfg.generator.train.learning_rate = 0.05;
    cfg.generator.train.epochs = 120;
    cfg.generator.train.decay_epochs = {80, 105};
    return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config parse error: " + std::string(e.what()));
    }
    ExperimentConfig cfg = default_config();
    parse_config_json(j, cfg);
    return cfg;
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override must be key=value: " + assignment);
    std::string key = assignment.substr(0, eq);
    std::string value = assignment.substr(eq + 1);

    json patch;
    json* node = &patch;
    std::size_t start = 0;
    while (true) {
        auto dot = key.find('.', start);
        std::string part = key.substr(start, dot - start);
        if (part.empty()) throw ConfigError("override has empty path segment: " + assignment);
        if (dot == std::string::npos) {
            json parsed;
            try {
                parsed = json::parse(value);
            } catch (const json::parse_error&) {
                parsed = value; // bare strings stay strings
            }
            (*node)[part] = parsed;
            break;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
    json merged = config_to_json(cfg);
    merged.merge_patch(patch);
    ExperimentConfig next = default_config();
    parse_config_json(merged, next);
    cfg = next;
}

std::string dump_config(const ExperimentConfig& cfg) { return config_to_json(cfg).dump(2); }

Session::Session(ExperimentConfig cfg) : cfg_(std::move(cfg)) {}

const data::LabeledDataset& Session::dataset() {
    if (!dataset_) {
        if (cfg_.data.source == "synthetic") {
            data::SynthConfig sc = cfg_.data.synthetic;
            sc.seed = derive_seed(cfg_.seed, "data");
            dataset_ = data::gen_synthetic(sc);
        } else {
            data::IdxOptions opt;
            opt.kmeans_per_class = cfg_.data.idx_kmeans_per_class;
            opt.kmeans_iters = cfg_.data.idx_kmeans_iters;
            opt.seed = derive_seed(cfg_.seed, "data");
            dataset_ = data::load_idx(cfg_.data.idx_images, cfg_.data.idx_labels, opt);
        }
    }
    return *dataset_;
}

const data::SplitPlan& Session::split() {
    if (!split_) split_ = data::make_splits(dataset(), cfg_.data.fractions, derive_seed(cfg_.seed, "split"));
    return *split_;
}

const tinynn::DenseNet& Session::victim() {
    if (!victim_) {
        tinynn::TrainConfig tc = cfg_.model.train;
        tc.seed = derive_seed(cfg_.seed, "victim");
        zoo::VictimReport report;
        victim_ = zoo::train_victim(dataset(), split(), cfg_.model.victim_hidden, tc, &report);
        victim_report_ = std::move(report);
    }
    return *victim_;
}

const zoo::VictimReport& Session::victim_report() {
    victim();
    return *victim_report_;
}

const zoo::ShadowEnsemble& Session::shadows() {
    if (!shadows_) {
        tinynn::TrainConfig tc = cfg_.attacks_cfg.shadow_train;
        tc.seed = derive_seed(cfg_.seed, "shadows");
        shadows_ = zoo::train_shadows(dataset(), split().auditor_train_ids, cfg_.attacks_cfg.shadow_count,
                                      cfg_.attacks_cfg.shadow_mode, cfg_.model.victim_hidden, tc, cfg_.workers);
    }
    return *shadows_;
}

const zoo::GeneratorModel& Session::generator() {
    if (!generator_) {
        tinynn::TrainConfig tc = cfg_.generator.train;
        tc.seed = derive_seed(cfg_.seed, "generator");
        generator_ = zoo::train_generator(dataset(), split().public_pool_ids, victim(), cfg_.generator.hidden, tc);
    }
    return *generator_;
}

const attacks::ShokriAttack& Session::shokri() {
    if (!shokri_) {
        attacks::ShokriConfig sc = cfg_.attacks_cfg.shokri;
        sc.train.seed = derive_seed(cfg_.seed, "shokri");
        shokri_ = attacks::train_shokri(shadows(), dataset(), sc);
    }
    return *shokri_;
}

const Session::Candidates& Session::candidates() {
    if (!candidates_) {
        const auto& sp = split();
        std::vector<std::uint32_t> ids;
        ids.insert(ids.end(), sp.member_ids.begin(), sp.member_ids.end());
        ids.insert(ids.end(), sp.nonmember_eval_ids.begin(), sp.nonmember_eval_ids.end());
        data::LabeledDataset subset = dataset().subset(ids);
        Candidates c;
        c.samples = std::move(subset.samples);
        c.labels = std::move(subset.labels);
        c.ids = std::move(subset.sample_ids);
        c.is_member.assign(ids.size(), 0);
        std::fill(c.is_member.begin(), c.is_member.begin() + static_cast<std::ptrdiff_t>(sp.member_ids.size()),
                  1);
        candidates_ = std::move(c);
    }
    return *candidates_;
}

attacks::AttackContext Session::context(attacks::AttackId id) {
    attacks::AttackContext ctx;
    ctx.victim = &victim();
    ctx.data = &dataset();
    ctx.public_pool_ids = split().public_pool_ids;
    ctx.carlini_variant = cfg_.attacks_cfg.carlini_variant;
    ctx.rezaei = cfg_.attacks_cfg.rezaei;
    ctx.seed = derive_seed(cfg_.seed, "scoring");
    ctx.workers = cfg_.workers;
    if (id == attacks::AttackId::watson || id == attacks::AttackId::carlini) ctx.shadows = &shadows();
    if (id == attacks::AttackId::shokri) {
        ctx.shadows = &shadows();
        ctx.shokri = &shokri();
    }
    if (id == attacks::AttackId::rezaei && cfg_.attacks_cfg.rezaei.source == attacks::RezaeiSource::generator)
        ctx.generator = &generator();
    return ctx;
}

const attacks::ScoreVector& Session::candidate_scores(attacks::AttackId id) {
    auto& slot = scores_[slot_of(id)];
    if (!slot) {
        const Candidates& c = candidates();
        attacks::AttackContext ctx = context(id);
        slot = attacks::score_with(id, ctx, c.samples, c.labels, c.ids);
    }
    return *slot;
}

std::vector<double> Session::member_scores(attacks::AttackId id) {
    const auto& sv = candidate_scores(id);
    const auto& c = candidates();
    std::vector<double> out;
    for (std::size_t i = 0; i < sv.scores.size(); ++i)
        if (c.is_member[i]) out.push_back(sv.scores[i]);
    return out;
}

std::vector<double> Session::eval_scores(attacks::AttackId id) {
    const auto& sv = candidate_scores(id);
    const auto& c = candidates();
    std::vector<double> out;
    for (std::size_t i = 0; i < sv.scores.size(); ++i)
        if (!c.is_member[i]) out.push_back(sv.scores[i]);
    return out;
}

discredit::ClaimedMemberList Session::claim(attacks::AttackId id, std::size_t n_c) {
    const auto& sv = candidate_scores(id);
    const auto& c = candidates();
    audit::AuditCase stub = audit::auditor_claim(sv, c.labels, n_c, eval_scores(id));
    return stub.claimed;
}

double Session::generate_noise_sigma() {
    if (!noise_sigma_) {
        data::LabeledDataset members = dataset().subset(split().member_ids);
        Matrix latents = tinynn::encode(victim(), members.samples);
        std::vector<double> norms(latents.rows());
        for (std::size_t i = 0; i < latents.rows(); ++i) norms[i] = l2_norm(latents.row(i));
        std::nth_element(norms.begin(), norms.begin() + norms.size() / 2, norms.end());
        noise_sigma_ = cfg_.discredit_cfg.noise_sigma_scale * norms[norms.size() / 2];
    }
    return *noise_sigma_;
}

discredit::DiscreditingDataset Session::build_discrediting(attacks::AttackId id,
                                                           discredit::DiscreditMethod method, std::size_t n_c,
                                                           std::size_t n_n) {
    discredit::ClaimedMemberList claimed = claim(id, n_c);
    switch (method) {
        case discredit::DiscreditMethod::search:
            return discredit::discredit_search(victim(), claimed, dataset(), split().public_pool_ids, n_c, n_n);
        case discredit::DiscreditMethod::generate:
            return discredit::discredit_generate(victim(), generator(), claimed, dataset(), n_c, n_n,
                                                 generate_noise_sigma(),
                                                 derive_seed(cfg_.seed, "discredit-generate"));
        case discredit::DiscreditMethod::adversarial:
            return discredit::discredit_adversarial(victim(), claimed, dataset(), split().public_pool_ids, n_c,
                                                    n_n, cfg_.discredit_cfg.pgd,
                                                    derive_seed(cfg_.seed, "discredit-adversarial"),
                                                    cfg_.workers);
    }
    throw ConfigError("unknown discredit method");
}

attacks::ScoreVector Session::score_discrediting(attacks::AttackId id, const discredit::DiscreditingDataset& dd) {
    std::vector<std::uint32_t> ids(dd.size());
    for (std::size_t i = 0; i < dd.size(); ++i) ids[i] = static_cast<std::uint32_t>(0x40000000u + i);
    attacks::AttackContext ctx = context(id);
    return attacks::score_with(id, ctx, dd.samples, dd.labels, ids);
}

// ---------------------------------------------------------------------------
// subcommand recipes

namespace {

struct ArtifactLog {
    json artifacts = json::array();
    fs::path dir;

    void add(const fs::path& rel, const std::string& kind, const std::string& tag) {
        artifacts.push_back({{"path", rel.string()}, {"kind", kind}, {"tag", tag}});
    }
};

void write_manifest(const ArtifactLog& log, const std::string& subcommand, const ExperimentConfig& cfg) {
    json manifest;
    manifest["subcommand"] = subcommand;
    manifest["seed"] = cfg.seed;
    json cfg_echo = config_to_json(cfg);
    cfg_echo.erase("output_dir"); // the manifest already lives there
    manifest["config"] = cfg_echo;
    manifest["artifacts"] = log.artifacts;
    std::ofstream out(log.dir / "manifest.json");
    out << manifest.dump(2) << "\n";
}

void write_run_info(const fs::path& dir, const std::string& subcommand, double elapsed_seconds) {
    // Timestamps live here, outside the deterministic artifact set.
    json info;
    info["subcommand"] = subcommand;
    info["finished_unix"] =
        std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
            .count();
    info["elapsed_seconds"] = elapsed_seconds;
    std::ofstream out(dir / "run_info.json");
    out << info.dump(2) << "\n";
}

void write_json_file(const json& j, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open for write: " + path.string());
    out << j.dump(2) << "\n";
}

std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

data::LabeledDataset discrediting_as_dataset(const discredit::DiscreditingDataset& dd) {
    data::LabeledDataset ds;
    ds.samples = dd.samples;
    ds.labels = dd.labels;
    ds.subpop_ids.assign(dd.size(), 0);
    ds.sample_ids.resize(dd.size());
    for (std::size_t i = 0; i < dd.size(); ++i) ds.sample_ids[i] = static_cast<std::uint32_t>(0x40000000u + i);
    return ds;
}

void write_claimed_csv(const discredit::ClaimedMemberList& claimed, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open for write: " + path.string());
    out << "attack_id,sample_id,raw_score,label\n";
    for (const auto& e : claimed.entries)
        out << attacks::attack_name(claimed.source_attack) << ',' << e.sample_id << ',' << fmt17(e.raw_score)
            << ',' << e.label << "\n";
}

std::vector<double> descending_unique(std::vector<double> v) {
    std::sort(v.begin(), v.end(), std::greater<>());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

// 0.01% on the eval pool, or the smallest attainable FPR when the pool is
// too small to express it.
double sweep_threshold(std::vector<double> eval_scores) {
    std::sort(eval_scores.begin(), eval_scores.end(), std::greater<>());
    std::size_t k = static_cast<std::size_t>(static_cast<double>(eval_scores.size()) * 0.0001);
    if (k < 1) k = 1;
    return eval_scores[k - 1];
}

void recipe_gen_data(Session& s, ArtifactLog& log) {
    const auto& ds = s.dataset();
    const auto& sp = s.split();
    data::save_mids(ds, log.dir / "dataset.mids");
    log.add("dataset.mids", "dataset", "inputs");
    data::export_csv(ds, log.dir / "dataset.csv");
    log.add("dataset.csv", "dataset_csv", "inputs");
    json splits;
    splits["member_ids"] = sp.member_ids;
    splits["auditor_train_ids"] = sp.auditor_train_ids;
    splits["nonmember_eval_ids"] = sp.nonmember_eval_ids;
    splits["public_pool_ids"] = sp.public_pool_ids;
    write_json_file(splits, log.dir / "splits.json");
    log.add("splits.json", "split_plan", "inputs");
}

void recipe_train(Session& s, ArtifactLog& log) {
    tinynn::save_tnn(s.victim(), log.dir / "victim.tnn");
    log.add("victim.tnn", "model", "table1");
    zoo::save_ensemble(s.shadows(), log.dir / "shadows");
    log.add("shadows/ensemble.json", "shadow_manifest", "table1");
    tinynn::save_tnn(s.generator().net, log.dir / "generator.tnn");
    log.add("generator.tnn", "model", "table1");

    const auto& report = s.victim_report();
    json rj;
    rj["train_accuracy"] = report.train_accuracy;
    rj["test_accuracy"] = report.test_accuracy;
    rj["generator_reconstruction_mse"] = s.generator().final_mse;
    json epochs = json::array();
    for (const auto& e : report.log.epochs)
        epochs.push_back({{"learning_rate", e.learning_rate},
                          {"train_loss", e.train_loss},
                          {"train_accuracy", e.train_accuracy},
                          {"eval_accuracy", std::isnan(e.eval_accuracy) ? json() : json(e.eval_accuracy)}});
    rj["epochs"] = epochs;
    write_json_file(rj, log.dir / "train_report.json");
    log.add("train_report.json", "accuracy_report", "table1");
}

void recipe_attack(Session& s, ArtifactLog& log) {
    const auto& c = s.candidates();
    json summary;
    summary["victim"] = {{"train_accuracy", s.victim_report().train_accuracy},
                         {"test_accuracy", s.victim_report().test_accuracy}};
    for (auto id : s.config().attacks_cfg.enabled) {
        const auto& sv = s.candidate_scores(id);
        std::string name = attacks::attack_name(id);
        attacks::write_scores_csv(sv, c.is_member, log.dir / ("scores_" + name + ".csv"));
        log.add("scores_" + name + ".csv", "score_vector", "table2");

        metrics::RocCurve curve = metrics::roc(sv.scores, c.is_member);
        json aj;
        aj["auc"] = curve.auc;
        auto band = [&](double lo, double hi) {
            auto p = metrics::tpr_at_fpr_range(curve, lo, hi);
            if (!p) return json{{"attainable", false}};
            return json{{"attainable", true}, {"tpr", p->tpr}, {"achieved_fpr", p->achieved_fpr}};
        };
        aj["tpr_at_low_band"] = band(metrics::kLowBandLo, metrics::kLowBandHi);
        aj["tpr_at_mid_band"] = band(metrics::kMidBandLo, metrics::kMidBandHi);
        if (id == attacks::AttackId::shokri) aj["holdout_auc"] = s.shokri().holdout_auc;
        summary[name] = aj;
    }
    write_json_file(summary, log.dir / "attack_summary.json");
    log.add("attack_summary.json", "attack_summary", "table2,table3");
}

void recipe_discredit(Session& s, ArtifactLog& log) {
    const auto& dc = s.config().discredit_cfg;
    discredit::ClaimedMemberList claimed = s.claim(dc.attack, dc.n_c);
    write_claimed_csv(claimed, log.dir / "claimed.csv");
    log.add("claimed.csv", "claimed_member_list", "pipeline");

    discredit::DiscreditingDataset dd = s.build_discrediting(dc.attack, dc.method, dc.n_c, dc.n_n);
    std::string mname = discredit::method_name(dc.method);
    data::save_mids(discrediting_as_dataset(dd), log.dir / ("discredit_" + mname + ".mids"));
    log.add("discredit_" + mname + ".mids", "discrediting_dataset", "pipeline");
    discredit::write_provenance_csv(dd, log.dir / ("provenance_" + mname + ".csv"));
    log.add("provenance_" + mname + ".csv", "provenance", "pipeline");
}

void recipe_fprfpr(Session& s, ArtifactLog& log) {
    const auto& dc = s.config().discredit_cfg;
    std::string mname = discredit::method_name(dc.method);
    std::string table_tag = dc.method == discredit::DiscreditMethod::search
                                ? "table4"
                                : (dc.method == discredit::DiscreditMethod::generate ? "table5" : "table6");
    json ratios;
    for (auto id : s.config().attacks_cfg.enabled) {
        std::string name = attacks::attack_name(id);
        discredit::DiscreditingDataset dd = s.build_discrediting(id, dc.method, dc.n_c, dc.n_n);
        attacks::ScoreVector dd_scores = s.score_discrediting(id, dd);
        std::vector<double> members = s.member_scores(id);
        std::vector<double> evals = s.eval_scores(id);

        std::vector<double> all;
        all.insert(all.end(), members.begin(), members.end());
        all.insert(all.end(), evals.begin(), evals.end());
        all.insert(all.end(), dd_scores.scores.begin(), dd_scores.scores.end());
        auto thresholds = descending_unique(std::move(all));

        metrics::FprFprCurve curve = metrics::fpr_fpr(evals, dd_scores.scores, thresholds);
        std::string base = "fprfpr_" + name + "_" + mname;
        metrics::write_fprfpr_csv(curve, log.dir / (base + ".csv"));
        log.add(base + ".csv", "fprfpr_curve", "fig2");
        metrics::write_fprfpr_csv(curve, log.dir / (base + "_log.csv"), true, evals.size(), dd_scores.scores.size());
        log.add(base + "_log.csv", "fprfpr_curve_log", "fig2");

        metrics::RatioReport rep = metrics::ratio_at_min_fpr(evals, dd_scores.scores, members);
        ratios[name] = {{"threshold", rep.threshold},
                        {"auditor_min_fpr", rep.auditor_min_fpr},
                        {"discredit_fpr", rep.discredit_fpr},
                        {"ratio", std::isfinite(rep.ratio) ? json(rep.ratio) : json("inf")},
                        {"degenerate", rep.degenerate},
                        {"discredit_size", dd.size()}};
    }
    write_json_file(ratios, log.dir / ("ratio_report_" + mname + ".json"));
    log.add("ratio_report_" + mname + ".json", "ratio_report", table_tag);
}

void recipe_audit(Session& s, ArtifactLog& log) {
    const auto& dc = s.config().discredit_cfg;
    const auto& c = s.candidates();
    const auto& sv = s.candidate_scores(dc.attack);

    audit::AuditCase acase = audit::auditor_claim(sv, c.labels, dc.n_c, s.eval_scores(dc.attack));
    write_claimed_csv(acase.claimed, log.dir / "claimed.csv");
    log.add("claimed.csv", "claimed_member_list", "protocol");

    // artifact paths in the report are relative to the output dir
    std::vector<fs::path> artifacts = {"claimed.csv"};
    if (audit::judge_verify(acase, s.config().judge)) {
        audit::ChallengeParams params;
        params.n_c = dc.n_c;
        params.n_n = dc.n_n;
        params.noise_sigma = s.generate_noise_sigma();
        params.pgd = dc.pgd;
        params.seed = derive_seed(s.config().seed, "challenge");
        params.workers = s.config().workers;
        audit::auditee_challenge(acase, s.victim(), s.dataset(), s.split().public_pool_ids, dc.method, params);

        if (acase.state == audit::AuditState::Challenged) {
            std::string mname = discredit::method_name(dc.method);
            data::save_mids(discrediting_as_dataset(*acase.discrediting),
                            log.dir / ("discredit_" + mname + ".mids"));
            log.add("discredit_" + mname + ".mids", "discrediting_dataset", "protocol");
            discredit::write_provenance_csv(*acase.discrediting, log.dir / ("provenance_" + mname + ".csv"));
            log.add("provenance_" + mname + ".csv", "provenance", "protocol");
            artifacts.emplace_back("discredit_" + mname + ".mids");
            artifacts.emplace_back("provenance_" + mname + ".csv");

            attacks::AttackContext ctx = s.context(dc.attack);
            audit::judge_adjudicate(acase, ctx, s.config().judge);
        }
    }
    audit::write_case_report(acase, dc.method, s.config().judge, s.config().seed, artifacts,
                             log.dir / "case_report.json");
    log.add("case_report.json", "case_report", "protocol");
}

void recipe_hypotheses(Session& s, ArtifactLog& log) {
    const auto& hc = s.config().hypotheses;
    attacks::AttackId id = hc.attack;
    const auto& c = s.candidates();
    const auto& sv = s.candidate_scores(id);

    // top members by score (ground-truth members only)
    std::vector<std::size_t> member_rows;
    for (std::size_t i = 0; i < c.ids.size(); ++i)
        if (c.is_member[i]) member_rows.push_back(i);
    std::sort(member_rows.begin(), member_rows.end(), [&](std::size_t a, std::size_t b) {
        if (sv.scores[a] != sv.scores[b]) return sv.scores[a] > sv.scores[b];
        return c.ids[a] < c.ids[b];
    });
    std::size_t top_n = std::min(hc.top_members, member_rows.size());
    member_rows.resize(top_n);

    Matrix member_latents = tinynn::encode(s.victim(), c.samples.select_rows(member_rows));
    double sigma = s.generate_noise_sigma();
    const zoo::GeneratorModel& gen = s.generator();
    std::uint64_t seed = derive_seed(s.config().seed, "hypotheses");

    // Hypothesis 1: member score vs generated-neighbor score at fixed sigma.
    struct Pair {
        std::uint32_t member_id;
        double member_score;
        double neighbor_score;
        double latent_distance;
    };
    std::vector<Pair> h1;
    // Hypothesis 2: latent distance vs |score difference| at mixed sigma.
    std::vector<Pair> h2;

    auto generate_probe = [&](std::size_t mi, double sg, Rng& rng, Matrix& out) {
        Matrix z(1, member_latents.cols());
        auto base = member_latents.row(mi);
        for (std::size_t d = 0; d < z.cols(); ++d) z(0, d) = base[d] + rng.normal(0.0, sg);
        out = gen.generate(z);
    };

    std::vector<std::vector<double>> probe_rows;
    std::vector<int> probe_labels;
    std::vector<Pair> probe_meta;
    std::vector<char> probe_kind; // 1 = h1, 2 = h2
    for (std::size_t mi = 0; mi < top_n; ++mi) {
        std::size_t row = member_rows[mi];
        Rng rng(derive_seed(seed, "h1-probe", c.ids[row]));
        std::size_t accepted = 0;
        for (std::size_t attempt = 0; attempt < hc.neighbors_per_member * 4 && accepted < hc.neighbors_per_member;
             ++attempt) {
            Matrix probe;
            generate_probe(mi, sigma, rng, probe);
            if (tinynn::predict(s.victim(), probe)[0] != c.labels[row]) continue;
            probe_rows.emplace_back(probe.row(0).begin(), probe.row(0).end());
            probe_labels.push_back(c.labels[row]);
            double dist =
                discredit::cosine_distance(member_latents.row(mi), tinynn::encode(s.victim(), probe).row(0));
            probe_meta.push_back({c.ids[row], sv.scores[row], 0.0, dist});
            probe_kind.push_back(1);
            ++accepted;
        }
        Rng rng2(derive_seed(seed, "h2-probe", c.ids[row]));
        for (double scale : hc.mixed_sigma_scales) {
            for (int rep = 0; rep < 2; ++rep) {
                Matrix probe;
                generate_probe(mi, sigma / s.config().discredit_cfg.noise_sigma_scale * scale, rng2, probe);
                if (tinynn::predict(s.victim(), probe)[0] != c.labels[row]) continue;
                probe_rows.emplace_back(probe.row(0).begin(), probe.row(0).end());
                probe_labels.push_back(c.labels[row]);
                double dist =
                    discredit::cosine_distance(member_latents.row(mi), tinynn::encode(s.victim(), probe).row(0));
                probe_meta.push_back({c.ids[row], sv.scores[row], 0.0, dist});
                probe_kind.push_back(2);
            }
        }
    }

    if (!probe_rows.empty()) {
        Matrix probes(probe_rows.size(), s.dataset().dim());
        for (std::size_t i = 0; i < probe_rows.size(); ++i)
            std::copy(probe_rows[i].begin(), probe_rows[i].end(), probes.row(i).begin());
        std::vector<std::uint32_t> probe_ids(probe_rows.size());
        for (std::size_t i = 0; i < probe_ids.size(); ++i)
            probe_ids[i] = static_cast<std::uint32_t>(0x50000000u + i);
        attacks::AttackContext ctx = s.context(id);
        attacks::ScoreVector probe_scores = attacks::score_with(id, ctx, probes, probe_labels, probe_ids);
        for (std::size_t i = 0; i < probe_meta.size(); ++i) {
            probe_meta[i].neighbor_score = probe_scores.scores[i];
            (probe_kind[i] == 1 ? h1 : h2).push_back(probe_meta[i]);
        }
    }

    {
        std::ofstream out(log.dir / "fig5c_scatter.csv");
        out << "member_id,member_score,neighbor_score,latent_distance\n";
        for (const auto& p : h1)
            out << p.member_id << ',' << fmt17(p.member_score) << ',' << fmt17(p.neighbor_score) << ','
                << fmt17(p.latent_distance) << "\n";
    }
    log.add("fig5c_scatter.csv", "score_scatter", "fig5c");

    {
        std::ofstream out(log.dir / "fig7b_distance_score.csv");
        out << "member_id,latent_distance,abs_score_difference\n";
        for (const auto& p : h2)
            out << p.member_id << ',' << fmt17(p.latent_distance) << ','
                << fmt17(std::abs(p.member_score - p.neighbor_score)) << "\n";
    }
    log.add("fig7b_distance_score.csv", "distance_scatter", "fig7b");

    // Histograms of normalized scores: members, nonmembers, same-class and
    // different-class nearest public neighbors of the top members.
    const auto& sp = s.split();
    data::LabeledDataset pool = s.dataset().subset(sp.public_pool_ids);
    Matrix pool_latents = tinynn::encode(s.victim(), pool.samples);
    std::vector<std::uint32_t> same_ids, diff_ids;
    for (std::size_t mi = 0; mi < top_n; ++mi) {
        std::size_t row = member_rows[mi];
        auto same = discredit::latent_knn(pool_latents, pool.sample_ids, pool.labels, member_latents.row(mi),
                                          c.labels[row], 1);
        if (!same.ids.empty()) same_ids.push_back(same.ids[0]);
        double best = 3.0;
        std::uint32_t best_id = 0;
        bool found = false;
        for (std::size_t p = 0; p < pool.size(); ++p) {
            if (pool.labels[p] == c.labels[row]) continue;
            double d = discredit::cosine_distance(member_latents.row(mi), pool_latents.row(p));
            if (d < best) {
                best = d;
                best_id = pool.sample_ids[p];
                found = true;
            }
        }
        if (found) diff_ids.push_back(best_id);
    }
    auto score_ids = [&](const std::vector<std::uint32_t>& ids) {
        std::vector<double> out;
        if (ids.empty()) return out;
        data::LabeledDataset subset = s.dataset().subset(ids);
        attacks::AttackContext ctx = s.context(id);
        attacks::ScoreVector scores =
            attacks::score_with(id, ctx, subset.samples, subset.labels, subset.sample_ids);
        return scores.scores;
    };
    std::vector<double> same_scores = score_ids(same_ids);
    std::vector<double> diff_scores = score_ids(diff_ids);

    // min-max normalization against the candidate scores
    double ref_lo = *std::min_element(sv.scores.begin(), sv.scores.end());
    double ref_hi = *std::max_element(sv.scores.begin(), sv.scores.end());
    auto norm = [&](double v) {
        return ref_hi == ref_lo ? 0.5 : std::clamp((v - ref_lo) / (ref_hi - ref_lo), 0.0, 1.0);
    };
    std::size_t bins = hc.histogram_bins;
    auto bin_counts = [&](const std::vector<double>& raw) {
        std::vector<std::size_t> counts(bins, 0);
        for (double v : raw) {
            double nv = norm(v);
            std::size_t b = std::min(bins - 1, static_cast<std::size_t>(nv * static_cast<double>(bins)));
            counts[b]++;
        }
        return counts;
    };
    std::vector<double> mem_scores_raw = s.member_scores(id);
    std::vector<double> eval_scores_raw = s.eval_scores(id);
    auto cm = bin_counts(mem_scores_raw);
    auto cn = bin_counts(eval_scores_raw);
    auto cs = bin_counts(same_scores);
    auto cd = bin_counts(diff_scores);
    {
        std::ofstream out(log.dir / "fig6_histograms.csv");
        out << "bin_lo,bin_hi,members,nonmembers,same_class_neighbors,different_class_neighbors\n";
        for (std::size_t b = 0; b < bins; ++b) {
            double lo = static_cast<double>(b) / static_cast<double>(bins);
            double hi = static_cast<double>(b + 1) / static_cast<double>(bins);
            out << fmt17(lo) << ',' << fmt17(hi) << ',' << cm[b] << ',' << cn[b] << ',' << cs[b] << ',' << cd[b]
                << "\n";
        }
    }
    log.add("fig6_histograms.csv", "score_histograms", "fig6");

    // n_c and n_n sweeps at the fixed low-FPR threshold.
    double t = sweep_threshold(eval_scores_raw);
    {
        std::ofstream out(log.dir / "fig8_nc_sweep.csv");
        out << "n_c,discredit_size,fpr_on_discredit\n";
        for (std::size_t n_c : hc.n_c_sweep) {
            auto dd = s.build_discrediting(id, discredit::DiscreditMethod::search, n_c,
                                           s.config().discredit_cfg.n_n);
            auto dd_scores = s.score_discrediting(id, dd);
            std::size_t fp = 0;
            for (double v : dd_scores.scores)
                if (v >= t) ++fp;
            out << n_c << ',' << dd.size() << ','
                << fmt17(static_cast<double>(fp) / static_cast<double>(dd.size())) << "\n";
        }
    }
    log.add("fig8_nc_sweep.csv", "nc_sweep", "fig8");
    {
        std::ofstream out(log.dir / "fig9_nn_sweep.csv");
        out << "n_n,discredit_size,fpr_on_discredit\n";
        for (std::size_t n_n : hc.n_n_sweep) {
            auto dd = s.build_discrediting(id, discredit::DiscreditMethod::search,
                                           s.config().discredit_cfg.n_c, n_n);
            auto dd_scores = s.score_discrediting(id, dd);
            std::size_t fp = 0;
            for (double v : dd_scores.scores)
                if (v >= t) ++fp;
            out << n_n << ',' << dd.size() << ','
                << fmt17(static_cast<double>(fp) / static_cast<double>(dd.size())) << "\n";
        }
    }
    log.add("fig9_nn_sweep.csv", "nn_sweep", "fig9");

    json summary;
    auto corr = [&](const std::vector<Pair>& pairs, bool h1_mode) {
        json cj;
        if (pairs.size() >= 3) {
            std::vector<double> xs, ys;
            for (const auto& p : pairs) {
                if (h1_mode) {
                    xs.push_back(p.member_score);
                    ys.push_back(p.neighbor_score);
                } else {
                    xs.push_back(p.latent_distance);
                    ys.push_back(std::abs(p.member_score - p.neighbor_score));
                }
            }
            cj["pairs"] = pairs.size();
            cj["pearson"] = metrics::pearson(xs, ys);
            cj["spearman"] = metrics::spearman(xs, ys);
        } else {
            cj["pairs"] = pairs.size();
        }
        return cj;
    };
    summary["hypothesis1"] = corr(h1, true);
    summary["hypothesis2"] = corr(h2, false);
    summary["sweep_threshold"] = t;
    write_json_file(summary, log.dir / "hypotheses_summary.json");
    log.add("hypotheses_summary.json", "hypotheses_summary", "fig5c,fig7b,fig8,fig9");
}

void recipe_domain_shift(Session& s, ArtifactLog& log) {
    discredit::DiscreditingDataset pool_dd = discredit::pool_as_discrediting(s.dataset(), s.split().public_pool_ids);
    json ratios;
    for (auto id : s.config().attacks_cfg.enabled) {
        std::string name = attacks::attack_name(id);
        attacks::ScoreVector dd_scores = s.score_discrediting(id, pool_dd);
        std::vector<double> members = s.member_scores(id);
        std::vector<double> evals = s.eval_scores(id);

        std::vector<double> all;
        all.insert(all.end(), members.begin(), members.end());
        all.insert(all.end(), evals.begin(), evals.end());
        all.insert(all.end(), dd_scores.scores.begin(), dd_scores.scores.end());
        auto thresholds = descending_unique(std::move(all));
        metrics::FprFprCurve curve = metrics::fpr_fpr(evals, dd_scores.scores, thresholds);
        std::string base = "fprfpr_" + name + "_pool";
        metrics::write_fprfpr_csv(curve, log.dir / (base + ".csv"));
        log.add(base + ".csv", "fprfpr_curve", "fig14");
        metrics::write_fprfpr_csv(curve, log.dir / (base + "_log.csv"), true, evals.size(),
                                  dd_scores.scores.size());
        log.add(base + "_log.csv", "fprfpr_curve_log", "fig14");

        metrics::RatioReport rep = metrics::ratio_at_min_fpr(evals, dd_scores.scores, members);
        ratios[name] = {{"threshold", rep.threshold},
                        {"auditor_min_fpr", rep.auditor_min_fpr},
                        {"discredit_fpr", rep.discredit_fpr},
                        {"ratio", std::isfinite(rep.ratio) ? json(rep.ratio) : json("inf")},
                        {"degenerate", rep.degenerate}};
    }
    write_json_file(ratios, log.dir / "domain_shift_ratios.json");
    log.add("domain_shift_ratios.json", "ratio_report", "fig14,fig15,fig16");
}

} // namespace

std::vector<std::string> subcommand_names() {
    return {"gen-data", "train", "attack", "discredit", "fprfpr", "audit", "hypotheses", "domain-shift"};
}

int run_subcommand(const std::string& name, const ExperimentConfig& cfg) {
    fs::path outdir = cfg.output_dir;
    if (const char* root = std::getenv("MIAUDIT_OUT_ROOT"); root != nullptr && outdir.is_relative())
        outdir = fs::path(root) / outdir;

    auto fail = [&](const std::string& type, const std::string& message) {
        json err;
        err["error"] = {{"type", type}, {"message", message}, {"subcommand", name}};
        std::cerr << err.dump() << "\n";
        std::error_code ec;
        if (fs::exists(outdir, ec)) {
            std::ofstream out(outdir / "error.json");
            if (out) out << err.dump(2) << "\n";
        }
        return type == "config" ? 2 : 3;
    };

    try {
        auto known = subcommand_names();
        if (std::find(known.begin(), known.end(), name) == known.end())
            throw ConfigError("unknown subcommand: " + name);
        fs::create_directories(outdir);

        auto start = std::chrono::steady_clock::now();
        Session session(cfg);
        ArtifactLog log;
        log.dir = outdir;

        if (name == "gen-data")
            recipe_gen_data(session, log);
        else if (name == "train")
            recipe_train(session, log);
        else if (name == "attack")
            recipe_attack(session, log);
        else if (name == "discredit")
            recipe_discredit(session, log);
        else if (name == "fprfpr")
            recipe_fprfpr(session, log);
        else if (name == "audit")
            recipe_audit(session, log);
        else if (name == "hypotheses")
            recipe_hypotheses(session, log);
        else if (name == "domain-shift")
            recipe_domain_shift(session, log);

        write_manifest(log, name, cfg);
        double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        write_run_info(outdir, name, elapsed);
        return 0;
    } catch (const ConfigError& e) {
        return fail("config", e.what());
    } catch (const std::exception& e) {
        return fail("runtime", e.what());
    }
}

} // namespace miaudit::cli
