#pragma once

#include <cstdint>
#include <vector>

#include "miaudit/dataset.hpp"

namespace miaudit::data {

// Disjoint roles over one dataset. member ∪ nonmember_eval is the auditor's
// evaluation set; public_pool is the agreed nonmember search pool.
struct SplitPlan {
    std::vector<std::uint32_t> member_ids;
    std::vector<std::uint32_t> auditor_train_ids;
    std::vector<std::uint32_t> nonmember_eval_ids;
    std::vector<std::uint32_t> public_pool_ids;
};

struct SplitFractions {
    double member = 0.10;
    double auditor_train = 0.30;
    double nonmember_eval = 0.05;
    double public_pool = 0.55;
};

// Seeded partition stratified by subpop_id. Every subpopulation lands in
// both the member and public pools (the neighbor search needs both sides);
// a subpopulation too small to satisfy that is an error naming it.
SplitPlan make_splits(const LabeledDataset& ds, const SplitFractions& fractions, std::uint64_t seed);

} // namespace miaudit::data
