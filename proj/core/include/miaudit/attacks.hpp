#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "miaudit/dataset.hpp"
#include "miaudit/modelzoo.hpp"

namespace miaudit::attacks {

using data::LabeledDataset;
using tinynn::DenseNet;
using tinynn::TrainConfig;
using zoo::GeneratorModel;
using zoo::ShadowEnsemble;

enum class AttackId { gap, shokri, yeom, watson, carlini, rezaei };

std::string attack_name(AttackId id);
AttackId attack_from_name(const std::string& name);

// Per-sample membership scores; higher means "more likely member".
struct ScoreVector {
    AttackId attack_id = AttackId::gap;
    std::vector<std::uint32_t> sample_ids;
    std::vector<double> scores;
    bool normalized = false;
    // Nonzero where the scorer could not honor its probe budget (rezaei).
    std::vector<std::uint8_t> flags;
};

ScoreVector score_gap(const DenseNet& victim, const Matrix& samples, std::span<const int> labels,
                      std::span<const std::uint32_t> ids);

ScoreVector score_yeom(const DenseNet& victim, const Matrix& samples, std::span<const int> labels,
                       std::span<const std::uint32_t> ids);

struct ShokriConfig {
    std::vector<std::size_t> hidden = {16, 8};
    TrainConfig train;
    bool per_class = false;       // one attack net per class instead of a shared one
    double holdout_fraction = 0.1;
};

// Confidence-based attack model trained on (shadow, pool sample) pairs;
// feature = descending-sorted confidence vector plus one-hot label, target =
// the recorded membership bit.
struct ShokriAttack {
    std::vector<DenseNet> nets; // size 1, or one per class in per_class mode
    bool per_class = false;
    int classes = 0;
    double holdout_auc = 0.5; // sanity measure on held-out shadow samples

    std::vector<double> member_probability(const Matrix& probs, std::span<const int> labels) const;
};

ShokriAttack train_shokri(const ShadowEnsemble& shadows, const LabeledDataset& ds, const ShokriConfig& cfg);

ScoreVector score_shokri(const ShokriAttack& attack, const DenseNet& victim, const Matrix& samples,
                         std::span<const int> labels, std::span<const std::uint32_t> ids);

// Difficulty-calibrated loss: mean loss under the sample's OUT shadows minus
// the victim's loss.
ScoreVector score_watson(const DenseNet& victim, const ShadowEnsemble& shadows, const Matrix& samples,
                         std::span<const int> labels, std::span<const std::uint32_t> ids,
                         std::size_t workers = 0);

enum class CarliniVariant { online, offline };

inline constexpr double kPhiClamp = 1e-9;  // p_true clip before the logit
inline constexpr double kSigmaFloor = 1e-3;

double phi_logit(double p_true);

// Gaussian likelihood-ratio score from already-fitted statistics. The online
// score is log N(phi; mu_in, sd_in) - log N(phi; mu_out, sd_out); the offline
// score is the negative log of the one-sided tail against the OUT normal.
double carlini_score_from_stats(double phi_victim, double mu_in, double sd_in, double mu_out, double sd_out,
                                CarliniVariant variant);

ScoreVector score_carlini(const DenseNet& victim, const ShadowEnsemble& shadows, const Matrix& samples,
                          std::span<const int> labels, std::span<const std::uint32_t> ids, CarliniVariant variant,
                          std::size_t workers = 0);

enum class RezaeiSource { generator, pool };

struct RezaeiConfig {
    RezaeiSource source = RezaeiSource::generator;
    std::size_t probe_count = 16;
    double sigma_scale = 0.1; // of the median public-pool latent norm
    std::size_t min_probes = 4;
};

// Subpopulation-calibrated score: mean loss of same-subpopulation probes
// minus the sample's own loss. Probes come from the decoder around E(x), or
// from the nearest same-class public samples.
ScoreVector score_rezaei(const DenseNet& victim, const GeneratorModel* generator, const LabeledDataset& ds,
                         std::span<const std::uint32_t> public_pool_ids, const Matrix& samples,
                         std::span<const int> labels, std::span<const std::uint32_t> ids, const RezaeiConfig& cfg,
                         std::uint64_t seed);

// Min-max normalization against a reference score set, clamped to [0,1].
// A degenerate reference (max == min) maps everything to 0.5.
ScoreVector normalize_scores(const ScoreVector& sv, const ScoreVector& reference);

// Everything the auditor holds. The auditee never sees this type.
struct AttackContext {
    const DenseNet* victim = nullptr;
    const ShadowEnsemble* shadows = nullptr;
    const GeneratorModel* generator = nullptr;
    const ShokriAttack* shokri = nullptr;
    const LabeledDataset* data = nullptr;
    std::vector<std::uint32_t> public_pool_ids;
    CarliniVariant carlini_variant = CarliniVariant::offline;
    RezaeiConfig rezaei;
    std::uint64_t seed = 0;
    std::size_t workers = 0;
};

// Scores an arbitrary batch with the named attack; throws ContextError when
// the context lacks what the attack needs.
ScoreVector score_with(AttackId id, const AttackContext& ctx, const Matrix& samples, std::span<const int> labels,
                       std::span<const std::uint32_t> ids);

// attack_id,sample_id,raw_score,is_member
void write_scores_csv(const ScoreVector& sv, std::span<const std::uint8_t> is_member,
                      const std::filesystem::path& path);

} // namespace miaudit::attacks
