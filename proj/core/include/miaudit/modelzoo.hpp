#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "miaudit/dataset.hpp"
#include "miaudit/net.hpp"
#include "miaudit/splits.hpp"
#include "miaudit/train.hpp"

namespace miaudit::zoo {

using data::LabeledDataset;
using data::SplitPlan;
using tinynn::DenseNet;
using tinynn::TrainConfig;
using tinynn::TrainLog;

struct VictimReport {
    double train_accuracy = 0.0; // on the member split, after training
    double test_accuracy = 0.0;  // on the nonmember_eval split
    TrainLog log;
};

// Trains on split.member_ids only; accuracy is evaluated on members vs the
// nonmember_eval pool. The train/test gap is the knob the whole pipeline
// depends on: small member sets plus enough epochs produce it.
DenseNet train_victim(const LabeledDataset& ds, const SplitPlan& split, const std::vector<std::size_t>& hidden,
                      const TrainConfig& cfg, VictimReport* report = nullptr);

enum class ShadowMode { paired, out_only };

struct ShadowEnsemble {
    std::vector<DenseNet> models;
    std::vector<std::uint32_t> pool_ids;            // column order of the mask
    std::vector<std::vector<std::uint8_t>> mask;    // mask[model][col] == 1 iff IN
    ShadowMode mode = ShadowMode::paired;
    std::uint64_t seed = 0;

    std::size_t count() const { return models.size(); }
    // Column for a sample id; samples outside the pool have no column and
    // count as OUT for every model.
    std::optional<std::size_t> column_of(std::uint32_t sample_id) const;
    std::size_t in_count(std::size_t col) const;

    void rebuild_index();

  private:
    std::unordered_map<std::uint32_t, std::size_t> id_to_col_;
};

// The per-sample IN/OUT bits, derivable from the ensemble seed alone:
// column j is a run of Bernoulli(1/2) draws keyed on (seed, sample_id),
// redrawn while the column is degenerate for the mode.
std::vector<std::vector<std::uint8_t>> derive_shadow_mask(std::uint64_t seed, std::size_t k, ShadowMode mode,
                                                          std::span<const std::uint32_t> pool_ids);

ShadowEnsemble train_shadows(const LabeledDataset& ds, std::span<const std::uint32_t> pool_ids, std::size_t k,
                             ShadowMode mode, const std::vector<std::size_t>& hidden, const TrainConfig& cfg,
                             std::size_t workers = 0);

// Decoder from the victim's latent space back to inputs. Outputs are clamped
// to [0,1] at generation time.
struct GeneratorModel {
    DenseNet net;
    double final_mse = 0.0; // reconstruction MSE on its training pool

    Matrix generate(const Matrix& latents) const;
};

GeneratorModel train_generator(const LabeledDataset& ds, std::span<const std::uint32_t> pool_ids,
                               const DenseNet& encoder, const std::vector<std::size_t>& hidden,
                               const TrainConfig& cfg);

// JSON manifest plus one TNN1 file per model and a bit-packed mask
// (row = model, column = pool index order).
void save_ensemble(const ShadowEnsemble& ens, const std::filesystem::path& dir);
ShadowEnsemble load_ensemble(const std::filesystem::path& dir);

} // namespace miaudit::zoo
