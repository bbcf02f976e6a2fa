#include "miaudit/synthetic.hpp"

#include <algorithm>

#include "miaudit/errors.hpp"
#include "miaudit/rng.hpp"

namespace miaudit::data {

void SynthConfig::validate() const {
    if (classes < 1 || subpops_per_class < 1 || dim < 1 || samples_per_subpop < 1)
        throw ConfigError("SynthConfig: counts must be >= 1");
    if (cluster_spread <= 0.0 || center_spread <= 0.0)
        throw ConfigError("SynthConfig: spreads must be > 0");
}

LabeledDataset gen_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    std::size_t n_clusters = cfg.classes * cfg.subpops_per_class;
    std::size_t n = n_clusters * cfg.samples_per_subpop;

    LabeledDataset ds;
    ds.samples = Matrix(n, cfg.dim);
    ds.labels.resize(n);
    ds.subpop_ids.resize(n);
    ds.sample_ids.resize(n);

    std::size_t row = 0;
    for (std::size_t c = 0; c < cfg.classes; ++c) {
        for (std::size_t s = 0; s < cfg.subpops_per_class; ++s) {
            std::size_t cluster = c * cfg.subpops_per_class + s;
            Rng rng(derive_seed(cfg.seed, "synth-cluster", cluster));
            std::vector<double> center(cfg.dim);
            for (double& v : center) v = rng.normal(0.5, cfg.center_spread);
            for (std::size_t i = 0; i < cfg.samples_per_subpop; ++i, ++row) {
                auto out = ds.samples.row(row);
                for (std::size_t d = 0; d < cfg.dim; ++d)
                    out[d] = std::clamp(rng.normal(center[d], cfg.cluster_spread), 0.0, 1.0);
                ds.labels[row] = static_cast<int>(c);
                ds.subpop_ids[row] = static_cast<int>(cluster);
                ds.sample_ids[row] = static_cast<std::uint32_t>(row);
            }
        }
    }
    return ds;
}

} // namespace miaudit::data
