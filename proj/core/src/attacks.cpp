#include "miaudit/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "miaudit/errors.hpp"
#include "miaudit/metrics.hpp"
#include "miaudit/parallel.hpp"
#include "miaudit/rng.hpp"

namespace miaudit::attacks {

std::string attack_name(AttackId id) {
    switch (id) {
        case AttackId::gap: return "gap";
        case AttackId::shokri: return "shokri";
        case AttackId::yeom: return "yeom";
        case AttackId::watson: return "watson";
        case AttackId::carlini: return "carlini";
        case AttackId::rezaei: return "rezaei";
    }
    return "unknown";
}

AttackId attack_from_name(const std::string& name) {
    for (AttackId id : {AttackId::gap, AttackId::shokri, AttackId::yeom, AttackId::watson, AttackId::carlini,
                        AttackId::rezaei})
        if (attack_name(id) == name) return id;
    throw ConfigError("unknown attack: " + name);
}

ScoreVector score_gap(const DenseNet& victim, const Matrix& samples, std::span<const int> labels,
                      std::span<const std::uint32_t> ids) {
    auto preds = tinynn::predict(victim, samples);
    ScoreVector sv;
    sv.attack_id = AttackId::gap;
    sv.sample_ids.assign(ids.begin(), ids.end());
    sv.scores.resize(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) sv.scores[i] = preds[i] == labels[i] ? 1.0 : 0.0;
    return sv;
}

ScoreVector score_yeom(const DenseNet& victim, const Matrix& samples, std::span<const int> labels,
                       std::span<const std::uint32_t> ids) {
    auto losses = tinynn::sample_losses(victim, samples, labels);
    ScoreVector sv;
    sv.attack_id = AttackId::yeom;
    sv.sample_ids.assign(ids.begin(), ids.end());
    sv.scores.resize(losses.size());
    for (std::size_t i = 0; i < losses.size(); ++i) sv.scores[i] = -losses[i];
    return sv;
}

namespace {

// Per-model losses over one batch, model-major. Models are read-only, so the
// outer loop parallelizes cleanly.
std::vector<std::vector<double>> shadow_losses(const ShadowEnsemble& shadows, const Matrix& samples,
                                               std::span<const int> labels, std::size_t workers) {
    std::vector<std::vector<double>> out(shadows.count());
    parallel_for(shadows.count(), workers,
                 [&](std::size_t m) { out[m] = tinynn::sample_losses(shadows.models[m], samples, labels); });
    return out;
}

Matrix shokri_features(const Matrix& probs, std::span<const int> labels, int classes) {
    Matrix feat(probs.rows(), probs.cols() + static_cast<std::size_t>(classes));
    std::vector<double> conf(probs.cols());
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        auto in = probs.row(i);
        conf.assign(in.begin(), in.end());
        std::sort(conf.begin(), conf.end(), std::greater<>());
        auto out = feat.row(i);
        for (std::size_t j = 0; j < conf.size(); ++j) out[j] = conf[j];
        out[probs.cols() + static_cast<std::size_t>(labels[i])] = 1.0;
    }
    return feat;
}

} // namespace

std::vector<double> ShokriAttack::member_probability(const Matrix& probs, std::span<const int> labels) const {
    Matrix feat = shokri_features(probs, labels, classes);
    std::vector<double> out(probs.rows());
    if (!per_class) {
        Matrix p = tinynn::forward(nets[0], feat).probs;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = p(i, 1);
        return out;
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        Matrix one(1, feat.cols());
        std::copy(feat.row(i).begin(), feat.row(i).end(), one.row(0).begin());
        Matrix p = tinynn::forward(nets[static_cast<std::size_t>(labels[i])], one).probs;
        out[i] = p(0, 1);
    }
    return out;
}

ShokriAttack train_shokri(const ShadowEnsemble& shadows, const LabeledDataset& ds, const ShokriConfig& cfg) {
    if (shadows.count() == 0) throw ContextError("shokri: no shadow models");
    LabeledDataset pool = ds.subset(shadows.pool_ids);
    int classes = ds.num_classes();

    // Hold out whole pool samples, not pairs: rows of one sample under
    // different shadows share geometry and would leak across the split.
    Rng holdout_rng(derive_seed(cfg.train.seed, "shokri-holdout"));
    std::vector<std::uint8_t> held(pool.size());
    for (auto& h : held) h = holdout_rng.uniform() < cfg.holdout_fraction ? 1 : 0;

    std::vector<Matrix> probs_per_model(shadows.count());
    for (std::size_t m = 0; m < shadows.count(); ++m)
        probs_per_model[m] = tinynn::forward(shadows.models[m], pool.samples).probs;

    std::size_t feat_dim = static_cast<std::size_t>(classes) * 2;
    std::vector<std::size_t> dims;
    dims.push_back(feat_dim);
    dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    dims.push_back(2);

    auto gather = [&](bool holdout, int class_filter, Matrix& X, std::vector<int>& y) {
        std::vector<std::size_t> rows;
        std::vector<int> bits;
        for (std::size_t m = 0; m < shadows.count(); ++m)
            for (std::size_t col = 0; col < pool.size(); ++col) {
                if ((held[col] == 1) != holdout) continue;
                if (class_filter >= 0 && pool.labels[col] != class_filter) continue;
                rows.push_back(m * pool.size() + col);
                bits.push_back(shadows.mask[m][col]);
            }
        X = Matrix(rows.size(), feat_dim);
        y.resize(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            std::size_t m = rows[i] / pool.size();
            std::size_t col = rows[i] % pool.size();
            Matrix one(1, pool.dim());
            auto conf = probs_per_model[m].row(col);
            std::vector<double> sorted(conf.begin(), conf.end());
            std::sort(sorted.begin(), sorted.end(), std::greater<>());
            auto out = X.row(i);
            for (std::size_t j = 0; j < sorted.size(); ++j) out[j] = sorted[j];
            out[static_cast<std::size_t>(classes + pool.labels[col])] = 1.0;
            y[i] = bits[i];
        }
    };

    ShokriAttack attack;
    attack.per_class = cfg.per_class;
    attack.classes = classes;

    std::vector<int> net_classes;
    if (cfg.per_class)
        for (int c = 0; c < classes; ++c) net_classes.push_back(c);
    else
        net_classes.push_back(-1);

    for (std::size_t k = 0; k < net_classes.size(); ++k) {
        Matrix X;
        std::vector<int> y;
        gather(false, net_classes[k], X, y);
        DenseNet net = tinynn::make_net(dims, derive_seed(cfg.train.seed, "shokri-init", k));
        TrainConfig tc = cfg.train;
        tc.seed = derive_seed(cfg.train.seed, "shokri-train", k);
        tinynn::train_sgd(net, X, y, tc);
        attack.nets.push_back(std::move(net));
    }

    // AUC on the held-out shadow rows; 0.5 when the holdout is degenerate.
    Matrix hx;
    std::vector<int> hy;
    gather(true, -1, hx, hy);
    attack.holdout_auc = 0.5;
    if (!hy.empty() && std::count(hy.begin(), hy.end(), 1) > 0 && std::count(hy.begin(), hy.end(), 0) > 0) {
        std::vector<double> scores(hy.size());
        if (!cfg.per_class) {
            Matrix p = tinynn::forward(attack.nets[0], hx).probs;
            for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = p(i, 1);
        } else {
            for (std::size_t i = 0; i < scores.size(); ++i) {
                Matrix one(1, hx.cols());
                std::copy(hx.row(i).begin(), hx.row(i).end(), one.row(0).begin());
                int label = 0;
                for (int c = 0; c < classes; ++c)
                    if (one(0, static_cast<std::size_t>(classes + c)) > 0.5) label = c;
                Matrix p = tinynn::forward(attack.nets[static_cast<std::size_t>(label)], one).probs;
                scores[i] = p(0, 1);
            }
        }
        std::vector<std::uint8_t> is_member(hy.begin(), hy.end());
        attack.holdout_auc = metrics::roc(scores, is_member).auc;
    }
    return attack;
}

ScoreVector score_shokri(const ShokriAttack& attack, const DenseNet& victim, const Matrix& samples,
                         std::span<const int> labels, std::span<const std::uint32_t> ids) {
    Matrix probs = tinynn::forward(victim, samples).probs;
    ScoreVector sv;
    sv.attack_id = AttackId::shokri;
    sv.sample_ids.assign(ids.begin(), ids.end());
    sv.scores = attack.member_probability(probs, labels);
    return sv;
}

ScoreVector score_watson(const DenseNet& victim, const ShadowEnsemble& shadows, const Matrix& samples,
                         std::span<const int> labels, std::span<const std::uint32_t> ids, std::size_t workers) {
    auto victim_losses = tinynn::sample_losses(victim, samples, labels);
    auto per_model = shadow_losses(shadows, samples, labels, workers);

    ScoreVector sv;
    sv.attack_id = AttackId::watson;
    sv.sample_ids.assign(ids.begin(), ids.end());
    sv.scores.resize(samples.rows());

    std::string missing;
    for (std::size_t i = 0; i < samples.rows(); ++i) {
        auto col = shadows.column_of(ids[i]);
        double sum = 0.0;
        std::size_t n_out = 0;
        for (std::size_t m = 0; m < shadows.count(); ++m) {
            if (col && shadows.mask[m][*col]) continue; // IN model, skip
            sum += per_model[m][i];
            ++n_out;
        }
        if (n_out == 0) {
            missing += missing.empty() ? "" : ",";
            missing += std::to_string(ids[i]);
            continue;
        }
        sv.scores[i] = sum / static_cast<double>(n_out) - victim_losses[i];
    }
    if (!missing.empty()) throw ContextError("watson: samples with zero OUT shadows: " + missing);
    return sv;
}

double phi_logit(double p_true) {
    double p = std::clamp(p_true, kPhiClamp, 1.0 - kPhiClamp);
    return std::log(p / (1.0 - p));
}

double carlini_score_from_stats(double phi_victim, double mu_in, double sd_in, double mu_out, double sd_out,
                                CarliniVariant variant) {
    sd_in = std::max(sd_in, kSigmaFloor);
    sd_out = std::max(sd_out, kSigmaFloor);
    if (variant == CarliniVariant::online) {
        double zi = (phi_victim - mu_in) / sd_in;
        double zo = (phi_victim - mu_out) / sd_out;
        return (-0.5 * zi * zi - std::log(sd_in)) - (-0.5 * zo * zo - std::log(sd_out));
    }
    // One-sided tail 1 - Phi(z) against the OUT normal, evaluated literally
    // in 64-bit arithmetic: Phi(z) rounds to 1.0 near z ~ 8.2, so strongly
    // member-like samples saturate at a common ceiling instead of being
    // ranked by digits the CDF cannot resolve.
    double z = (phi_victim - mu_out) / sd_out;
    double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
    double tail = std::max(1.0 - cdf, std::numeric_limits<double>::denorm_min());
    return -std::log(tail);
}

ScoreVector score_carlini(const DenseNet& victim, const ShadowEnsemble& shadows, const Matrix& samples,
                          std::span<const int> labels, std::span<const std::uint32_t> ids, CarliniVariant variant,
                          std::size_t workers) {
    Matrix victim_probs = tinynn::forward(victim, samples).probs;
    std::vector<Matrix> model_probs(shadows.count());
    parallel_for(shadows.count(), workers,
                 [&](std::size_t m) { model_probs[m] = tinynn::forward(shadows.models[m], samples).probs; });

    ScoreVector sv;
    sv.attack_id = AttackId::carlini;
    sv.sample_ids.assign(ids.begin(), ids.end());
    sv.scores.resize(samples.rows());

    std::string starved;
    for (std::size_t i = 0; i < samples.rows(); ++i) {
        auto y = static_cast<std::size_t>(labels[i]);
        double phi_v = phi_logit(victim_probs(i, y));
        auto col = shadows.column_of(ids[i]);

        std::vector<double> in_phis, out_phis;
        for (std::size_t m = 0; m < shadows.count(); ++m) {
            double phi = phi_logit(model_probs[m](i, y));
            bool is_in = col && shadows.mask[m][*col];
            (is_in ? in_phis : out_phis).push_back(phi);
        }
        if (out_phis.size() < 2 || (variant == CarliniVariant::online && in_phis.size() < 2)) {
            starved += starved.empty() ? "" : ",";
            starved += std::to_string(ids[i]);
            continue;
        }
        auto fit = [](const std::vector<double>& v) {
            double mu = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
            double ss = 0.0;
            for (double x : v) ss += (x - mu) * (x - mu);
            double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
            return std::pair{mu, sd};
        };
        auto [mu_out, sd_out] = fit(out_phis);
        double mu_in = 0.0, sd_in = 1.0;
        if (variant == CarliniVariant::online) std::tie(mu_in, sd_in) = fit(in_phis);
        sv.scores[i] = carlini_score_from_stats(phi_v, mu_in, sd_in, mu_out, sd_out, variant);
    }
    if (!starved.empty())
        throw ContextError("carlini(" + std::string(variant == CarliniVariant::online ? "online" : "offline") +
                           "): insufficient shadows for samples: " + starved);
    return sv;
}

ScoreVector score_rezaei(const DenseNet& victim, const GeneratorModel* generator, const LabeledDataset& ds,
                         std::span<const std::uint32_t> public_pool_ids, const Matrix& samples,
                         std::span<const int> labels, std::span<const std::uint32_t> ids, const RezaeiConfig& cfg,
                         std::uint64_t seed) {
    if (cfg.source == RezaeiSource::generator && generator == nullptr)
        throw ContextError("rezaei: generator source configured but no generator present");
    if (cfg.source == RezaeiSource::pool && public_pool_ids.empty())
        throw ContextError("rezaei: pool source configured but public pool is empty");

    auto own_losses = tinynn::sample_losses(victim, samples, labels);
    Matrix latents = tinynn::encode(victim, samples);

    ScoreVector sv;
    sv.attack_id = AttackId::rezaei;
    sv.sample_ids.assign(ids.begin(), ids.end());
    sv.scores.resize(samples.rows());
    sv.flags.assign(samples.rows(), 0);

    if (cfg.source == RezaeiSource::generator) {
        // Probe scale follows the shared public pool, so every scored batch
        // lives on the same scale.
        LabeledDataset pool = ds.subset(public_pool_ids);
        Matrix pool_latents = tinynn::encode(victim, pool.samples);
        std::vector<double> norms(pool_latents.rows());
        for (std::size_t i = 0; i < pool_latents.rows(); ++i) norms[i] = l2_norm(pool_latents.row(i));
        std::nth_element(norms.begin(), norms.begin() + norms.size() / 2, norms.end());
        double sigma = cfg.sigma_scale * norms[norms.size() / 2];

        for (std::size_t i = 0; i < samples.rows(); ++i) {
            Rng rng(derive_seed(seed, "rezaei-probe", ids[i]));
            Matrix noisy(cfg.probe_count, latents.cols());
            for (std::size_t p = 0; p < cfg.probe_count; ++p) {
                auto base = latents.row(i);
                auto out = noisy.row(p);
                for (std::size_t j = 0; j < base.size(); ++j) out[j] = base[j] + rng.normal(0.0, sigma);
            }
            Matrix probes = generator->generate(noisy);
            auto preds = tinynn::predict(victim, probes);
            std::vector<int> probe_labels(cfg.probe_count, labels[i]);
            auto losses = tinynn::sample_losses(victim, probes, probe_labels);

            double sum = 0.0;
            std::size_t accepted = 0;
            for (std::size_t p = 0; p < cfg.probe_count; ++p) {
                if (preds[p] != labels[i]) continue;
                sum += losses[p];
                ++accepted;
            }
            if (accepted < cfg.min_probes) {
                sv.flags[i] = 1;
                if (accepted == 0) { // fall back to the unfiltered probe mean
                    sum = std::accumulate(losses.begin(), losses.end(), 0.0);
                    accepted = cfg.probe_count;
                }
            }
            sv.scores[i] = sum / static_cast<double>(accepted) - own_losses[i];
        }
        return sv;
    }

    // pool source: nearest same-class public samples in latent cosine distance
    LabeledDataset pool = ds.subset(public_pool_ids);
    Matrix pool_latents = tinynn::encode(victim, pool.samples);
    auto pool_losses = tinynn::sample_losses(victim, pool.samples, pool.labels);

    for (std::size_t i = 0; i < samples.rows(); ++i) {
        auto q = latents.row(i);
        double qn = l2_norm(q);
        std::vector<std::pair<double, std::size_t>> cands;
        for (std::size_t p = 0; p < pool.size(); ++p) {
            if (pool.labels[p] != labels[i]) continue;
            auto r = pool_latents.row(p);
            double rn = l2_norm(r);
            if (qn == 0.0 || rn == 0.0) continue;
            cands.emplace_back(1.0 - dot(q, r) / (qn * rn), p);
        }
        std::size_t m = std::min(cfg.probe_count, cands.size());
        std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(m), cands.end());
        if (m < cfg.min_probes) sv.flags[i] = 1;
        double sum = 0.0;
        for (std::size_t p = 0; p < m; ++p) sum += pool_losses[cands[p].second];
        sv.scores[i] = (m > 0 ? sum / static_cast<double>(m) : 0.0) - own_losses[i];
    }
    return sv;
}

ScoreVector normalize_scores(const ScoreVector& sv, const ScoreVector& reference) {
    if (reference.scores.empty()) throw DimensionError("normalize_scores: empty reference");
    double lo = *std::min_element(reference.scores.begin(), reference.scores.end());
    double hi = *std::max_element(reference.scores.begin(), reference.scores.end());
    ScoreVector out = sv;
    out.normalized = true;
    if (hi == lo) {
        std::fill(out.scores.begin(), out.scores.end(), 0.5);
        return out;
    }
    for (double& s : out.scores) s = std::clamp((s - lo) / (hi - lo), 0.0, 1.0);
    return out;
}

ScoreVector score_with(AttackId id, const AttackContext& ctx, const Matrix& samples, std::span<const int> labels,
                       std::span<const std::uint32_t> ids) {
    if (ctx.victim == nullptr) throw ContextError("attack context: no victim model");
    switch (id) {
        case AttackId::gap:
            return score_gap(*ctx.victim, samples, labels, ids);
        case AttackId::yeom:
            return score_yeom(*ctx.victim, samples, labels, ids);
        case AttackId::shokri:
            if (ctx.shokri == nullptr) throw ContextError("attack context: shokri net not trained");
            return score_shokri(*ctx.shokri, *ctx.victim, samples, labels, ids);
        case AttackId::watson:
            if (ctx.shadows == nullptr) throw ContextError("attack context: watson needs shadows");
            return score_watson(*ctx.victim, *ctx.shadows, samples, labels, ids, ctx.workers);
        case AttackId::carlini:
            if (ctx.shadows == nullptr) throw ContextError("attack context: carlini needs shadows");
            return score_carlini(*ctx.victim, *ctx.shadows, samples, labels, ids, ctx.carlini_variant, ctx.workers);
        case AttackId::rezaei:
            if (ctx.data == nullptr) throw ContextError("attack context: rezaei needs the dataset");
            return score_rezaei(*ctx.victim, ctx.generator, *ctx.data, ctx.public_pool_ids, samples, labels, ids,
                                ctx.rezaei, ctx.seed);
    }
    throw ContextError("unknown attack id");
}

void write_scores_csv(const ScoreVector& sv, std::span<const std::uint8_t> is_member,
                      const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open for write: " + path.string());
    out << "attack_id,sample_id,raw_score,is_member\n";
    char buf[32];
    for (std::size_t i = 0; i < sv.scores.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", sv.scores[i]);
        out << attack_name(sv.attack_id) << ',' << sv.sample_ids[i] << ',' << buf << ','
            << (is_member.empty() ? 0 : int(is_member[i])) << "\n";
    }
}

} // namespace miaudit::attacks
