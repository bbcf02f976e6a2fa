#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "miaudit/attacks.hpp"
#include "miaudit/audit.hpp"
#include "miaudit/discredit.hpp"
#include "miaudit/idx.hpp"
#include "miaudit/metrics.hpp"
#include "miaudit/modelzoo.hpp"
#include "miaudit/splits.hpp"
#include "miaudit/synthetic.hpp"

namespace miaudit::cli {

struct DataConfig {
    std::string source = "synthetic"; // synthetic | idx
    data::SynthConfig synthetic;
    std::filesystem::path idx_images;
    std::filesystem::path idx_labels;
    std::size_t idx_kmeans_per_class = 10;
    std::size_t idx_kmeans_iters = 20;
    data::SplitFractions fractions;
};

struct ModelConfig {
    std::vector<std::size_t> victim_hidden = {256};
    tinynn::TrainConfig train; // decay_epochs/epochs overridden by defaults below
};

struct AttacksConfig {
    std::vector<attacks::AttackId> enabled;
    std::size_t shadow_count = 32;
    zoo::ShadowMode shadow_mode = zoo::ShadowMode::paired;
    tinynn::TrainConfig shadow_train;
    attacks::CarliniVariant carlini_variant = attacks::CarliniVariant::offline;
    attacks::ShokriConfig shokri;
    attacks::RezaeiConfig rezaei;
};

struct GeneratorConfig {
    std::vector<std::size_t> hidden = {128, 128};
    tinynn::TrainConfig train;
};

struct DiscreditConfig {
    attacks::AttackId attack = attacks::AttackId::watson;
    discredit::DiscreditMethod method = discredit::DiscreditMethod::search;
    std::size_t n_c = 25;
    std::size_t n_n = 3;
    double noise_sigma_scale = 0.1; // of the median member latent norm
    discredit::PgdConfig pgd;
};

struct HypothesesConfig {
    attacks::AttackId attack = attacks::AttackId::watson;
    std::size_t top_members = 50;
    std::size_t neighbors_per_member = 4;
    std::vector<double> mixed_sigma_scales = {0.05, 0.1, 0.2, 0.5, 1.0};
    std::vector<std::size_t> n_c_sweep = {10, 25, 50, 100};
    std::vector<std::size_t> n_n_sweep = {1, 2, 3, 5};
    std::size_t histogram_bins = 20;
};

struct ExperimentConfig {
    std::uint64_t seed = 7;
    std::size_t workers = 0; // 0 = hardware concurrency
    std::filesystem::path output_dir = "out";
    DataConfig data;
    ModelConfig model;
    AttacksConfig attacks_cfg;
    GeneratorConfig generator;
    DiscreditConfig discredit_cfg;
    audit::JudgeConfig judge;
    HypothesesConfig hypotheses;
};

ExperimentConfig default_config();
ExperimentConfig load_config(const std::filesystem::path& path);
// key=value with dotted paths, e.g. model.train.epochs=30
void apply_override(ExperimentConfig& cfg, const std::string& assignment);
std::string dump_config(const ExperimentConfig& cfg);

// Lazily built pipeline state shared by the subcommand recipes. Everything
// is a pure function of the config, so any stage can be rebuilt on demand.
class Session {
  public:
    explicit Session(ExperimentConfig cfg);

    const ExperimentConfig& config() const { return cfg_; }

    const data::LabeledDataset& dataset();
    const data::SplitPlan& split();
    const tinynn::DenseNet& victim();
    const zoo::VictimReport& victim_report();
    const zoo::ShadowEnsemble& shadows();
    const zoo::GeneratorModel& generator();
    const attacks::ShokriAttack& shokri();

    // members then nonmember_eval, with ground truth
    struct Candidates {
        Matrix samples;
        std::vector<int> labels;
        std::vector<std::uint32_t> ids;
        std::vector<std::uint8_t> is_member;
    };
    const Candidates& candidates();

    const attacks::ScoreVector& candidate_scores(attacks::AttackId id);
    attacks::AttackContext context(attacks::AttackId id);

    // Scores of the ground-truth member / eval-nonmember halves.
    std::vector<double> member_scores(attacks::AttackId id);
    std::vector<double> eval_scores(attacks::AttackId id);

    // Claimed list of top-n_c candidates under one attack.
    discredit::ClaimedMemberList claim(attacks::AttackId id, std::size_t n_c);

    discredit::DiscreditingDataset build_discrediting(attacks::AttackId id, discredit::DiscreditMethod method,
                                                      std::size_t n_c, std::size_t n_n);

    attacks::ScoreVector score_discrediting(attacks::AttackId id, const discredit::DiscreditingDataset& dd);

    // sigma for the generate method: noise_sigma_scale x median member latent norm
    double generate_noise_sigma();

  private:
    ExperimentConfig cfg_;
    std::optional<data::LabeledDataset> dataset_;
    std::optional<data::SplitPlan> split_;
    std::optional<tinynn::DenseNet> victim_;
    std::optional<zoo::VictimReport> victim_report_;
    std::optional<zoo::ShadowEnsemble> shadows_;
    std::optional<zoo::GeneratorModel> generator_;
    std::optional<attacks::ShokriAttack> shokri_;
    std::optional<Candidates> candidates_;
    std::vector<std::optional<attacks::ScoreVector>> scores_ =
        std::vector<std::optional<attacks::ScoreVector>>(6);
    std::optional<double> noise_sigma_;
};

// Exit codes: 0 ok, 2 config error, 3 runtime failure. On failure an error
// JSON goes to stderr (and error.json under the output dir when possible).
int run_subcommand(const std::string& name, const ExperimentConfig& cfg);

std::vector<std::string> subcommand_names();

} // namespace miaudit::cli
