#include "miaudit/splits.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <string>

#include "miaudit/errors.hpp"
#include "miaudit/rng.hpp"

namespace miaudit::data {

SplitPlan make_splits(const LabeledDataset& ds, const SplitFractions& f, std::uint64_t seed) {
    std::array<double, 4> fr = {f.member, f.auditor_train, f.nonmember_eval, f.public_pool};
    double total = 0.0;
    for (double v : fr) {
        if (v < 0.0) throw ConfigError("make_splits: negative fraction");
        total += v;
    }
    if (total > 1.0 + 1e-9) throw ConfigError("make_splits: fractions sum to > 1");

    std::map<int, std::vector<std::uint32_t>> by_subpop;
    for (std::size_t i = 0; i < ds.size(); ++i) by_subpop[ds.subpop_ids[i]].push_back(ds.sample_ids[i]);

    SplitPlan plan;
    std::array<std::vector<std::uint32_t>*, 4> out = {&plan.member_ids, &plan.auditor_train_ids,
                                                      &plan.nonmember_eval_ids, &plan.public_pool_ids};
    for (auto& [subpop, ids] : by_subpop) {
        Rng rng(derive_seed(seed, "split", static_cast<std::uint64_t>(subpop)));
        rng.shuffle(ids);
        std::size_t n = ids.size();

        std::array<std::size_t, 4> counts;
        std::array<double, 4> remainder;
        std::size_t assigned = 0;
        for (std::size_t k = 0; k < 4; ++k) {
            double exact = fr[k] * static_cast<double>(n);
            counts[k] = static_cast<std::size_t>(exact);
            remainder[k] = exact - static_cast<double>(counts[k]);
            assigned += counts[k];
        }
        // Largest remainder gets the rows lost to flooring (only up to the
        // configured total).
        std::size_t target = static_cast<std::size_t>(std::floor(total * static_cast<double>(n) + 1e-9));
        while (assigned < target) {
            std::size_t best = 0;
            for (std::size_t k = 1; k < 4; ++k)
                if (remainder[k] > remainder[best]) best = k;
            counts[best]++;
            remainder[best] = -1.0;
            assigned++;
        }
        // Member and public presence is structural; steal from the largest
        // split when flooring starved either.
        for (std::size_t k : {std::size_t{0}, std::size_t{3}}) {
            if (fr[k] > 0.0 && counts[k] == 0) {
                std::size_t donor = 0;
                for (std::size_t j = 1; j < 4; ++j)
                    if (counts[j] > counts[donor]) donor = j;
                if (counts[donor] <= 1)
                    throw ConfigError("make_splits: subpopulation " + std::to_string(subpop) +
                                      " too small to stratify");
                counts[donor]--;
                counts[k]++;
            }
        }
        if ((fr[0] > 0.0 && counts[0] == 0) || (fr[3] > 0.0 && counts[3] == 0))
            throw ConfigError("make_splits: subpopulation " + std::to_string(subpop) + " too small to stratify");

        std::size_t pos = 0;
        for (std::size_t k = 0; k < 4; ++k) {
            for (std::size_t i = 0; i < counts[k]; ++i) out[k]->push_back(ids[pos++]);
        }
    }
    for (auto* v : out) std::sort(v->begin(), v->end());
    return plan;
}

} // namespace miaudit::data
