#pragma once

#include <cstdint>

#include "miaudit/dataset.hpp"

namespace miaudit::data {

// Subpopulation-structured Gaussian mixture. Cluster centers are drawn
// per-coordinate from N(0.5, center_spread^2); points from
// N(center, cluster_spread^2), clipped to [0,1]. Class overlap (and with it
// any train/test gap for an overfit classifier) requires cluster_spread to
// exceed center_spread, so both orderings are legal.
struct SynthConfig {
    std::size_t classes = 2;
    std::size_t subpops_per_class = 8;
    std::size_t dim = 64;
    double cluster_spread = 0.30;  // sigma within a subpopulation
    double center_spread = 0.08;   // sigma of the center distribution
    std::size_t samples_per_subpop = 1250;
    std::uint64_t seed = 1;

    void validate() const;
};

LabeledDataset gen_synthetic(const SynthConfig& cfg);

} // namespace miaudit::data
