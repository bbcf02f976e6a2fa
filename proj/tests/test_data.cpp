#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "miaudit/dataset.hpp"
#include "miaudit/errors.hpp"
#include "miaudit/idx.hpp"
#include "miaudit/rng.hpp"
#include "miaudit/splits.hpp"
#include "miaudit/synthetic.hpp"

using namespace miaudit;
using namespace miaudit::data;

namespace {

SynthConfig small_config() {
    SynthConfig cfg;
    cfg.classes = 2;
    cfg.subpops_per_class = 2;
    cfg.dim = 6;
    cfg.cluster_spread = 0.08;
    cfg.center_spread = 0.15;
    cfg.samples_per_subpop = 100;
    cfg.seed = 17;
    return cfg;
}

void write_bytes(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> be32(std::uint32_t v) {
    return {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
            static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
}

void append(std::vector<unsigned char>& dst, const std::vector<unsigned char>& src) {
    dst.insert(dst.end(), src.begin(), src.end());
}

} // namespace

TEST_CASE("degenerate spread collapses every sample onto the center") {
    SynthConfig cfg = small_config();
    cfg.classes = 1;
    cfg.subpops_per_class = 1;
    cfg.cluster_spread = 1e-12;
    cfg.samples_per_subpop = 20;
    auto ds = gen_synthetic(cfg);
    for (std::size_t i = 1; i < ds.size(); ++i)
        for (std::size_t j = 0; j < ds.dim(); ++j)
            CHECK(ds.samples(i, j) == doctest::Approx(ds.samples(0, j)).epsilon(1e-9));
}

TEST_CASE("synthetic counts and ids") {
    auto ds = gen_synthetic(small_config());
    CHECK(ds.size() == 400);
    std::set<int> pops(ds.subpop_ids.begin(), ds.subpop_ids.end());
    CHECK(pops.size() == 4);
    std::size_t class0 = 0;
    for (int l : ds.labels)
        if (l == 0) ++class0;
    CHECK(class0 == 200); // class balance is exact by construction
    for (std::size_t i = 0; i < ds.size(); ++i) CHECK(ds.sample_ids[i] == i);
}

TEST_CASE("within-subpop distances are smaller than cross-subpop distances") {
    auto ds = gen_synthetic(small_config());
    double within = 0.0, cross = 0.0;
    std::size_t nw = 0, nc = 0;
    for (std::size_t i = 0; i < ds.size(); ++i)
        for (std::size_t j = i + 1; j < ds.size(); ++j) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < ds.dim(); ++k) {
                double d = ds.samples(i, k) - ds.samples(j, k);
                d2 += d * d;
            }
            double dist = std::sqrt(d2);
            if (ds.subpop_ids[i] == ds.subpop_ids[j]) {
                within += dist;
                ++nw;
            } else {
                cross += dist;
                ++nc;
            }
        }
    CHECK(within / double(nw) < cross / double(nc));
}

TEST_CASE("per-cluster sample means stay near their centers") {
    SynthConfig cfg = small_config();
    cfg.samples_per_subpop = 400;
    auto ds = gen_synthetic(cfg);
    // Re-derive the centers from the generator's stream.
    for (std::size_t cluster = 0; cluster < 4; ++cluster) {
        Rng rng(derive_seed(cfg.seed, "synth-cluster", cluster));
        std::vector<double> center(cfg.dim);
        for (double& v : center) v = rng.normal(0.5, cfg.center_spread);
        std::vector<double> mean(cfg.dim, 0.0);
        std::size_t n = 0;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            if (ds.subpop_ids[i] != static_cast<int>(cluster)) continue;
            for (std::size_t k = 0; k < cfg.dim; ++k) mean[k] += ds.samples(i, k);
            ++n;
        }
        double bound = 3.0 * cfg.cluster_spread / std::sqrt(static_cast<double>(n));
        for (std::size_t k = 0; k < cfg.dim; ++k)
            CHECK(std::abs(mean[k] / static_cast<double>(n) - std::clamp(center[k], 0.0, 1.0)) <
                  bound + 0.02); // clipping shifts extreme-center coordinates
    }
}

TEST_CASE("determinism of the generator") {
    auto a = gen_synthetic(small_config());
    auto b = gen_synthetic(small_config());
    CHECK(a.samples.data() == b.samples.data());
    CHECK(a.labels == b.labels);
}

TEST_CASE("equal quarters split 400 samples into four blocks of 100") {
    auto ds = gen_synthetic(small_config());
    SplitFractions f{0.25, 0.25, 0.25, 0.25};
    auto plan = make_splits(ds, f, 5);
    CHECK(plan.member_ids.size() == 100);
    CHECK(plan.auditor_train_ids.size() == 100);
    CHECK(plan.nonmember_eval_ids.size() == 100);
    CHECK(plan.public_pool_ids.size() == 100);
}

TEST_CASE("splits are deterministic and disjoint") {
    auto ds = gen_synthetic(small_config());
    SplitFractions f{0.3, 0.3, 0.1, 0.3};
    auto a = make_splits(ds, f, 9);
    auto b = make_splits(ds, f, 9);
    CHECK(a.member_ids == b.member_ids);
    CHECK(a.public_pool_ids == b.public_pool_ids);

    // member/public intersection must be empty (set-intersection oracle)
    std::set<std::uint32_t> members(a.member_ids.begin(), a.member_ids.end());
    for (auto id : a.public_pool_ids) CHECK(members.count(id) == 0);
}

TEST_CASE("split disjointness holds over random fraction vectors") {
    auto ds = gen_synthetic(small_config());
    Rng rng(2024);
    for (int trial = 0; trial < 20; ++trial) {
        double a = rng.uniform(0.05, 0.4);
        double b = rng.uniform(0.05, 0.3);
        double c = rng.uniform(0.05, 0.2);
        double d = std::min(1.0 - a - b - c, rng.uniform(0.05, 0.4));
        SplitFractions f{a, b, c, d};
        auto plan = make_splits(ds, f, 1000 + static_cast<std::uint64_t>(trial));
        std::set<std::uint32_t> seen;
        std::size_t total = 0;
        for (const auto* ids :
             {&plan.member_ids, &plan.auditor_train_ids, &plan.nonmember_eval_ids, &plan.public_pool_ids}) {
            for (auto id : *ids) seen.insert(id);
            total += ids->size();
        }
        CHECK(seen.size() == total); // pairwise disjoint
        CHECK(!plan.member_ids.empty());
        CHECK(!plan.public_pool_ids.empty());
    }
}

TEST_CASE("a subpopulation too small to stratify is reported by id") {
    SynthConfig cfg = small_config();
    cfg.samples_per_subpop = 1;
    auto ds = gen_synthetic(cfg);
    SplitFractions f{0.25, 0.25, 0.25, 0.25};
    try {
        make_splits(ds, f, 1);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("subpopulation") != std::string::npos);
    }
}

TEST_CASE("fractions above one are rejected") {
    auto ds = gen_synthetic(small_config());
    SplitFractions f{0.5, 0.5, 0.5, 0.5};
    CHECK_THROWS_AS(make_splits(ds, f, 1), ConfigError);
}

TEST_CASE("IDX ingestion scales pixels and checks counts") {
    auto dir = std::filesystem::temp_directory_path();
    auto img_path = dir / "miaudit_idx_images";
    auto lab_path = dir / "miaudit_idx_labels";

    std::vector<unsigned char> img;
    append(img, be32(0x00000803));
    append(img, be32(1)); // one image
    append(img, be32(2));
    append(img, be32(2));
    img.insert(img.end(), {0, 255, 0, 255});
    write_bytes(img_path, img);

    std::vector<unsigned char> lab;
    append(lab, be32(0x00000801));
    append(lab, be32(1));
    lab.push_back(7);
    write_bytes(lab_path, lab);

    IdxOptions opt;
    opt.kmeans_per_class = 1;
    auto ds = load_idx(img_path, lab_path, opt);
    CHECK(ds.size() == 1);
    CHECK(ds.dim() == 4);
    CHECK(ds.samples(0, 0) == 0.0);
    CHECK(ds.samples(0, 1) == 1.0);
    CHECK(ds.samples(0, 2) == 0.0);
    CHECK(ds.samples(0, 3) == 1.0);
    CHECK(ds.labels[0] == 7);

    SUBCASE("count mismatch") {
        std::vector<unsigned char> lab2;
        append(lab2, be32(0x00000801));
        append(lab2, be32(2));
        lab2.push_back(7);
        lab2.push_back(3);
        write_bytes(lab_path, lab2);
        CHECK_THROWS_AS(load_idx(img_path, lab_path, opt), FormatError);
    }
    SUBCASE("wrong magic") {
        std::vector<unsigned char> img2;
        append(img2, be32(0x00000802));
        append(img2, be32(1));
        append(img2, be32(2));
        append(img2, be32(2));
        img2.insert(img2.end(), {0, 255, 0, 255});
        write_bytes(img_path, img2);
        CHECK_THROWS_AS(load_idx(img_path, lab_path, opt), FormatError);
    }
    SUBCASE("truncated pixel data") {
        std::vector<unsigned char> img3;
        append(img3, be32(0x00000803));
        append(img3, be32(2));
        append(img3, be32(2));
        append(img3, be32(2));
        img3.insert(img3.end(), {0, 255, 0, 255, 9});
        write_bytes(img_path, img3);
        CHECK_THROWS_AS(load_idx(img_path, lab_path, opt), FormatError);
    }

    std::filesystem::remove(img_path);
    std::filesystem::remove(lab_path);
}

TEST_CASE("IDX k-means assigns subpopulations per class") {
    // two well-separated blobs per class; k=2 should recover them
    auto dir = std::filesystem::temp_directory_path();
    auto img_path = dir / "miaudit_idx_km_images";
    auto lab_path = dir / "miaudit_idx_km_labels";

    std::vector<unsigned char> img;
    append(img, be32(0x00000803));
    append(img, be32(8));
    append(img, be32(1));
    append(img, be32(2));
    // class 0: four samples, two near (0,0), two near (255,255)
    img.insert(img.end(), {0, 0, 10, 5, 250, 255, 245, 250});
    // class 1: same structure
    img.insert(img.end(), {5, 0, 0, 10, 255, 250, 250, 245});
    write_bytes(img_path, img);

    std::vector<unsigned char> lab;
    append(lab, be32(0x00000801));
    append(lab, be32(8));
    for (unsigned char l : {0, 0, 0, 0, 1, 1, 1, 1}) lab.push_back(l);
    write_bytes(lab_path, lab);

    IdxOptions opt;
    opt.kmeans_per_class = 2;
    auto ds = load_idx(img_path, lab_path, opt);
    CHECK(ds.subpop_ids[0] == ds.subpop_ids[1]);
    CHECK(ds.subpop_ids[2] == ds.subpop_ids[3]);
    CHECK(ds.subpop_ids[0] != ds.subpop_ids[2]);
    CHECK(ds.subpop_ids[4] == ds.subpop_ids[5]);
    CHECK(ds.subpop_ids[4] != ds.subpop_ids[6]);
    // per-class id ranges do not collide
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 4; j < 8; ++j) CHECK(ds.subpop_ids[i] != ds.subpop_ids[j]);

    std::filesystem::remove(img_path);
    std::filesystem::remove(lab_path);
}

TEST_CASE("MIDS round trip is bit exact") {
    auto ds = gen_synthetic(small_config());
    auto path = std::filesystem::temp_directory_path() / "miaudit_test.mids";
    save_mids(ds, path);
    auto back = load_mids(path);
    CHECK(back.samples.data() == ds.samples.data());
    CHECK(back.labels == ds.labels);
    CHECK(back.subpop_ids == ds.subpop_ids);
    CHECK(back.sample_ids == ds.sample_ids);
    std::filesystem::remove(path);
}

TEST_CASE("MIDS rejects a bad magic") {
    auto path = std::filesystem::temp_directory_path() / "miaudit_bad.mids";
    std::ofstream out(path, std::ios::binary);
    out << "NOPE";
    out.close();
    CHECK_THROWS_AS(load_mids(path), FormatError);
    std::filesystem::remove(path);
}

TEST_CASE("CSV export carries the expected header") {
    SynthConfig cfg = small_config();
    cfg.samples_per_subpop = 2;
    auto ds = gen_synthetic(cfg);
    auto path = std::filesystem::temp_directory_path() / "miaudit_test.csv";
    export_csv(ds, path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header.rfind("id,label,subpop,f0,f1", 0) == 0);
    std::size_t lines = 0;
    std::string line;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == ds.size());
    std::filesystem::remove(path);
}

TEST_CASE("subset keeps original sample ids") {
    auto ds = gen_synthetic(small_config());
    std::vector<std::uint32_t> ids = {5, 17, 200};
    auto sub = ds.subset(ids);
    CHECK(sub.sample_ids == ids);
    CHECK(sub.labels[2] == ds.labels[200]);
    CHECK_THROWS_AS(ds.subset(std::vector<std::uint32_t>{99999}), FormatError);
}
