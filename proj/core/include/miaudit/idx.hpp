#pragma once

#include <cstdint>
#include <filesystem>

#include "miaudit/dataset.hpp"

namespace miaudit::data {

struct IdxOptions {
    std::size_t kmeans_per_class = 10;
    std::size_t kmeans_iters = 20;
    std::uint64_t seed = 1;
};

// Parses the big-endian IDX pair (images magic 0x00000803, labels
// 0x00000801), scales pixels to [0,1] and assigns subpopulation ids by
// seeded per-class k-means in pixel space.
LabeledDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                        const IdxOptions& opt = {});

} // namespace miaudit::data
