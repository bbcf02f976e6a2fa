#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "miaudit/attacks.hpp"
#include "miaudit/dataset.hpp"
#include "miaudit/modelzoo.hpp"

namespace miaudit::discredit {

using attacks::AttackId;
using data::LabeledDataset;
using tinynn::DenseNet;
using zoo::GeneratorModel;

// 1 - u.v / (|u||v|), in [0, 2]. Zero vectors are an error.
double cosine_distance(std::span<const double> u, std::span<const double> v);

struct KnnResult {
    std::vector<std::uint32_t> ids; // ascending distance, ties by id
    std::vector<double> distances;
    bool truncated = false; // fewer same-class pool samples than k
};

// k nearest same-class pool rows by latent cosine distance.
KnnResult latent_knn(const Matrix& pool_latents, std::span<const std::uint32_t> pool_ids,
                     std::span<const int> pool_labels, std::span<const double> query_latent, int query_label,
                     std::size_t k);

struct ClaimedEntry {
    std::uint32_t sample_id;
    double raw_score;
    int label;
};

// Descending by score, ties broken by ascending sample id.
struct ClaimedMemberList {
    AttackId source_attack = AttackId::gap;
    std::vector<ClaimedEntry> entries;

    void sort_canonical();
    void validate() const;
};

enum class DiscreditMethod { search, generate, adversarial };

std::string method_name(DiscreditMethod m);
DiscreditMethod method_from_name(const std::string& name);

struct ProvenanceRecord {
    DiscreditMethod method = DiscreditMethod::search;
    std::int64_t source_member_id = -1; // -1 for control sets with no source
    double latent_distance = 0.0;       // cosine distance of E(source) to E(sample)
    double initial_mse = 0.0;           // adversarial only
    double final_mse = 0.0;
    std::uint64_t seed = 0;
};

struct DiscreditingDataset {
    Matrix samples;
    std::vector<int> labels;
    std::vector<ProvenanceRecord> provenance;

    std::size_t size() const { return labels.size(); }
};

// Nearest same-class public neighbors of the top-n_c claimed members,
// deduplicated by pool id keeping the smallest-distance occurrence.
DiscreditingDataset discredit_search(const DenseNet& encoder, const ClaimedMemberList& claimed,
                                     const LabeledDataset& ds, std::span<const std::uint32_t> public_pool_ids,
                                     std::size_t n_c, std::size_t n_n);

// Decoder samples around each claimed member's latent; a probe is kept only
// when the victim assigns it the member's label.
DiscreditingDataset discredit_generate(const DenseNet& victim, const GeneratorModel& generator,
                                       const ClaimedMemberList& claimed, const LabeledDataset& ds, std::size_t n_c,
                                       std::size_t n_n, double noise_sigma, std::uint64_t seed);

enum class PgdStepRule { sign, gradient };

struct PgdConfig {
    double step = 0.001;
    std::size_t iters = 100;
    double epsilon = 0.05;        // l-inf budget around the anchor
    PgdStepRule rule = PgdStepRule::sign;
};

struct PgdResult {
    std::vector<double> best;      // iterate with minimal latent MSE
    std::vector<double> mse_trace; // iters+1 entries, starting at the anchor
    std::size_t best_iter = 0;
    std::vector<std::vector<double>> iterates; // filled when record_iterates
};

// Minimizes mean((E(x') - target)^2) over the input, projecting each
// iterate into the epsilon-ball around the anchor and clipping to [0,1].
PgdResult pgd_latent_match(const DenseNet& encoder, std::span<const double> target_latent,
                           std::span<const double> start, const PgdConfig& cfg, std::span<const double> anchor,
                           bool record_iterates = false);

// PGD from the nearest distinct same-class pool starts toward each claimed
// member's latent.
DiscreditingDataset discredit_adversarial(const DenseNet& encoder, const ClaimedMemberList& claimed,
                                          const LabeledDataset& ds, std::span<const std::uint32_t> pool_ids,
                                          std::size_t n_c, std::size_t n_n, const PgdConfig& cfg,
                                          std::uint64_t seed, std::size_t workers = 0);

// The whole public pool, unselected; the domain-shift control.
DiscreditingDataset pool_as_discrediting(const LabeledDataset& ds, std::span<const std::uint32_t> pool_ids);

// sample_id here is the row index within the discrediting set.
void write_provenance_csv(const DiscreditingDataset& dd, const std::filesystem::path& path);

} // namespace miaudit::discredit
