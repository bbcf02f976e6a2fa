#include "miaudit/modelzoo.hpp"

#include <algorithm>
#include <fstream>
#include <string>

#include <json.hpp>

#include "miaudit/errors.hpp"
#include "miaudit/parallel.hpp"
#include "miaudit/rng.hpp"

namespace miaudit::zoo {

using json = nlohmann::json;

DenseNet train_victim(const LabeledDataset& ds, const SplitPlan& split, const std::vector<std::size_t>& hidden,
                      const TrainConfig& cfg, VictimReport* report) {
    if (split.member_ids.empty()) throw ConfigError("train_victim: empty member split");

    LabeledDataset members = ds.subset(split.member_ids);
    LabeledDataset eval = ds.subset(split.nonmember_eval_ids);

    std::vector<std::size_t> dims;
    dims.push_back(ds.dim());
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(static_cast<std::size_t>(ds.num_classes()));

    DenseNet net = tinynn::make_net(dims, derive_seed(cfg.seed, "victim-init"));
    TrainLog log = tinynn::train_sgd(net, members.samples, members.labels, cfg, &eval.samples, eval.labels);

    if (report != nullptr) {
        report->train_accuracy = tinynn::accuracy(net, members.samples, members.labels);
        report->test_accuracy = tinynn::accuracy(net, eval.samples, eval.labels);
        report->log = std::move(log);
    }
    return net;
}

std::optional<std::size_t> ShadowEnsemble::column_of(std::uint32_t sample_id) const {
    auto it = id_to_col_.find(sample_id);
    if (it == id_to_col_.end()) return std::nullopt;
    return it->second;
}

std::size_t ShadowEnsemble::in_count(std::size_t col) const {
    std::size_t c = 0;
    for (const auto& row : mask) c += row[col];
    return c;
}

void ShadowEnsemble::rebuild_index() {
    id_to_col_.clear();
    id_to_col_.reserve(pool_ids.size());
    for (std::size_t i = 0; i < pool_ids.size(); ++i) id_to_col_.emplace(pool_ids[i], i);
}

std::vector<std::vector<std::uint8_t>> derive_shadow_mask(std::uint64_t seed, std::size_t k, ShadowMode mode,
                                                          std::span<const std::uint32_t> pool_ids) {
    std::vector<std::vector<std::uint8_t>> mask(k, std::vector<std::uint8_t>(pool_ids.size(), 0));
    for (std::size_t col = 0; col < pool_ids.size(); ++col) {
        for (std::uint64_t attempt = 0;; ++attempt) {
            Rng rng(derive_seed(seed ^ attempt * 0x9e3779b97f4a7c15ULL, "shadow-mask", pool_ids[col]));
            std::size_t in = 0;
            for (std::size_t m = 0; m < k; ++m) {
                std::uint8_t bit = rng.bernoulli_half() ? 1 : 0;
                mask[m][col] = bit;
                in += bit;
            }
            bool ok = mode == ShadowMode::paired ? (in > 0 && in < k) : (in < k);
            if (ok) break;
        }
    }
    return mask;
}

ShadowEnsemble train_shadows(const LabeledDataset& ds, std::span<const std::uint32_t> pool_ids, std::size_t k,
                             ShadowMode mode, const std::vector<std::size_t>& hidden, const TrainConfig& cfg,
                             std::size_t workers) {
    if (mode == ShadowMode::paired && k < 2) throw ConfigError("train_shadows: paired mode needs k >= 2");
    if (k < 1) throw ConfigError("train_shadows: k must be >= 1");
    if (pool_ids.size() < 2) throw ConfigError("train_shadows: pool too small");

    ShadowEnsemble ens;
    ens.mode = mode;
    ens.seed = cfg.seed;
    ens.pool_ids.assign(pool_ids.begin(), pool_ids.end());
    ens.mask = derive_shadow_mask(cfg.seed, k, mode, pool_ids);
    ens.models.resize(k);

    LabeledDataset pool = ds.subset(pool_ids);
    std::vector<std::size_t> dims;
    dims.push_back(ds.dim());
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(static_cast<std::size_t>(ds.num_classes()));

    parallel_for(k, workers, [&](std::size_t m) {
        std::vector<std::size_t> rows;
        for (std::size_t col = 0; col < ens.pool_ids.size(); ++col)
            if (ens.mask[m][col]) rows.push_back(col);
        Matrix train_x = pool.samples.select_rows(rows);
        std::vector<int> train_y(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) train_y[i] = pool.labels[rows[i]];

        TrainConfig shadow_cfg = cfg;
        shadow_cfg.seed = derive_seed(cfg.seed, "shadow-train", m);
        DenseNet net = tinynn::make_net(dims, derive_seed(cfg.seed, "shadow-init", m));
        tinynn::train_sgd(net, train_x, train_y, shadow_cfg);
        ens.models[m] = std::move(net);
    });

    ens.rebuild_index();
    return ens;
}

Matrix GeneratorModel::generate(const Matrix& latents) const {
    auto acts = tinynn::forward_hidden(net, latents);
    Matrix out = matmul(acts.back(), net.weights.back());
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] = std::clamp(r[j] + net.biases.back()[j], 0.0, 1.0);
    }
    return out;
}

GeneratorModel train_generator(const LabeledDataset& ds, std::span<const std::uint32_t> pool_ids,
                               const DenseNet& encoder, const std::vector<std::size_t>& hidden,
                               const TrainConfig& cfg) {
    LabeledDataset pool = ds.subset(pool_ids);
    Matrix latents = tinynn::encode(encoder, pool.samples);

    std::vector<std::size_t> dims;
    dims.push_back(encoder.latent_dim());
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(ds.dim());

    GeneratorModel gen;
    gen.net = tinynn::make_net(dims, derive_seed(cfg.seed, "generator-init"));
    tinynn::train_sgd_mse(gen.net, latents, pool.samples, cfg);

    Matrix recon = gen.generate(latents);
    double mse = 0.0;
    for (std::size_t i = 0; i < recon.data().size(); ++i) {
        double d = recon.data()[i] - pool.samples.data()[i];
        mse += d * d;
    }
    gen.final_mse = mse / static_cast<double>(recon.data().size());
    return gen;
}

void save_ensemble(const ShadowEnsemble& ens, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["mode"] = ens.mode == ShadowMode::paired ? "paired" : "out_only";
    manifest["seed"] = ens.seed;
    manifest["pool_ids"] = ens.pool_ids;
    manifest["mask_file"] = "mask.bin";
    json models = json::array();
    for (std::size_t m = 0; m < ens.count(); ++m) {
        std::string name = "shadow_" + std::to_string(m) + ".tnn";
        tinynn::save_tnn(ens.models[m], dir / name);
        models.push_back({{"file", name}, {"seed", derive_seed(ens.seed, "shadow-train", m)}});
    }
    manifest["models"] = models;

    std::ofstream mj(dir / "ensemble.json");
    mj << manifest.dump(2) << "\n";

    // Bit-packed: one row per model, columns in pool order.
    std::ofstream mf(dir / "mask.bin", std::ios::binary);
    std::size_t row_bytes = (ens.pool_ids.size() + 7) / 8;
    for (const auto& row : ens.mask) {
        std::vector<unsigned char> packed(row_bytes, 0);
        for (std::size_t col = 0; col < row.size(); ++col)
            if (row[col]) packed[col / 8] |= static_cast<unsigned char>(1u << (col % 8));
        mf.write(reinterpret_cast<const char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
    }
}

ShadowEnsemble load_ensemble(const std::filesystem::path& dir) {
    std::ifstream mj(dir / "ensemble.json");
    if (!mj) throw FormatError("cannot open ensemble manifest in " + dir.string());
    json manifest = json::parse(mj);

    ShadowEnsemble ens;
    ens.mode = manifest.at("mode").get<std::string>() == "paired" ? ShadowMode::paired : ShadowMode::out_only;
    ens.seed = manifest.at("seed").get<std::uint64_t>();
    ens.pool_ids = manifest.at("pool_ids").get<std::vector<std::uint32_t>>();
    for (const auto& m : manifest.at("models"))
        ens.models.push_back(tinynn::load_tnn(dir / m.at("file").get<std::string>()));

    std::ifstream mf(dir / manifest.at("mask_file").get<std::string>(), std::ios::binary);
    if (!mf) throw FormatError("cannot open ensemble mask in " + dir.string());
    std::size_t row_bytes = (ens.pool_ids.size() + 7) / 8;
    ens.mask.assign(ens.models.size(), std::vector<std::uint8_t>(ens.pool_ids.size(), 0));
    for (auto& row : ens.mask) {
        std::vector<unsigned char> packed(row_bytes);
        mf.read(reinterpret_cast<char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
        if (!mf) throw FormatError("ensemble mask truncated");
        for (std::size_t col = 0; col < row.size(); ++col)
            row[col] = (packed[col / 8] >> (col % 8)) & 1u;
    }
    ens.rebuild_index();
    return ens;
}

} // namespace miaudit::zoo
