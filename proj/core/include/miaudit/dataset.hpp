#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "miaudit/matrix.hpp"

namespace miaudit::data {

using miaudit::Matrix;

// Immutable after construction. Features live in [0,1]; sample_ids are
// stable across subsetting so split plans and score files can refer to rows
// of the full dataset.
struct LabeledDataset {
    Matrix samples;                      // n x d
    std::vector<int> labels;
    std::vector<int> subpop_ids;
    std::vector<std::uint32_t> sample_ids;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return samples.cols(); }
    int num_classes() const;

    void validate() const;

    // Rows for the given sample ids (ids must exist; for the full dataset
    // ids coincide with row indices).
    LabeledDataset subset(std::span<const std::uint32_t> ids) const;
    std::vector<std::size_t> rows_of(std::span<const std::uint32_t> ids) const;
};

// Native binary container: "MIDS", u32 n, u32 d, features f64, labels i32,
// subpop_ids i32, sample_ids u32; everything little-endian.
void save_mids(const LabeledDataset& ds, const std::filesystem::path& path);
LabeledDataset load_mids(const std::filesystem::path& path);

// Header row: id,label,subpop,f0..fd-1
void export_csv(const LabeledDataset& ds, const std::filesystem::path& path);

} // namespace miaudit::data
