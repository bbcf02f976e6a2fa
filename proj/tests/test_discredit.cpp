#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "miaudit/discredit.hpp"
#include "miaudit/errors.hpp"
#include "miaudit/splits.hpp"
#include "miaudit/synthetic.hpp"
#include "oracles.hpp"

using namespace miaudit;
using namespace miaudit::discredit;

namespace {

data::LabeledDataset tiny_dataset(std::size_t n, std::size_t dim, std::uint64_t seed, int classes = 2) {
    data::LabeledDataset ds;
    ds.samples = oracles::random_matrix(n, dim, seed);
    ds.labels = oracles::random_labels(n, classes, seed + 1);
    ds.subpop_ids.assign(n, 0);
    ds.sample_ids.resize(n);
    for (std::size_t i = 0; i < n; ++i) ds.sample_ids[i] = static_cast<std::uint32_t>(i);
    return ds;
}

ClaimedMemberList make_claimed(std::vector<ClaimedEntry> entries) {
    ClaimedMemberList c;
    c.entries = std::move(entries);
    c.sort_canonical();
    return c;
}

} // namespace

TEST_CASE("cosine distance anchors") {
    std::vector<double> u = {1.0, 0.0};
    std::vector<double> v = {0.0, 2.0};
    std::vector<double> w = {-3.0, 0.0};
    CHECK(cosine_distance(u, u) == doctest::Approx(0.0));
    CHECK(cosine_distance(u, v) == doctest::Approx(1.0));
    CHECK(cosine_distance(u, w) == doctest::Approx(2.0));
    std::vector<double> zero = {0.0, 0.0};
    CHECK_THROWS_AS(cosine_distance(u, zero), DimensionError);
}

TEST_CASE("latent knn ranks by distance within the class") {
    // pool latents engineered so distances to the query order as a < c < b
    Matrix pool(3, 2);
    pool(0, 0) = 1.0;
    pool(0, 1) = 0.05; // a: nearly aligned
    pool(1, 0) = 0.3;
    pool(1, 1) = 1.0; // b: far
    pool(2, 0) = 1.0;
    pool(2, 1) = 0.35; // c: middling
    std::vector<std::uint32_t> ids = {10, 11, 12};
    std::vector<int> labels = {0, 0, 0};
    std::vector<double> query = {1.0, 0.0};

    auto r = latent_knn(pool, ids, labels, query, 0, 2);
    REQUIRE(r.ids.size() == 2);
    CHECK(r.ids[0] == 10);
    CHECK(r.ids[1] == 12);
    CHECK(!r.truncated);
    CHECK(r.distances[0] < r.distances[1]);

    SUBCASE("query equal to a pool latent comes back first at distance zero") {
        std::vector<double> q2 = {0.3, 1.0};
        auto r2 = latent_knn(pool, ids, labels, q2, 0, 3);
        CHECK(r2.ids[0] == 11);
        CHECK(r2.distances[0] == doctest::Approx(0.0));
    }
    SUBCASE("class filter and truncation flag") {
        std::vector<int> mixed = {0, 1, 1};
        auto r3 = latent_knn(pool, ids, mixed, query, 1, 5);
        CHECK(r3.truncated);
        CHECK(r3.ids.size() == 2);
    }
    SUBCASE("ties break by ascending id") {
        Matrix dup(2, 2);
        dup(0, 0) = 1.0;
        dup(1, 0) = 1.0; // identical latents, distance ties
        std::vector<std::uint32_t> dup_ids = {42, 7};
        std::vector<int> dup_labels = {0, 0};
        auto r4 = latent_knn(dup, dup_ids, dup_labels, query, 0, 2);
        CHECK(r4.ids[0] == 7);
        CHECK(r4.ids[1] == 42);
    }
}

TEST_CASE("latent knn agrees with a full-sort oracle") {
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        std::size_t n = 40;
        Matrix pool = oracles::random_matrix(n, 6, seed, 0.05, 1.0);
        std::vector<std::uint32_t> ids(n);
        for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<std::uint32_t>(i * 3 + 1);
        auto labels = oracles::random_labels(n, 2, seed + 100);
        std::vector<double> query(6);
        oracles::Rng rng(seed + 200);
        for (double& v : query) v = rng.uniform(0.05, 1.0);

        auto fast = latent_knn(pool, ids, labels, query, 0, 5);

        std::vector<std::pair<double, std::uint32_t>> all;
        for (std::size_t i = 0; i < n; ++i)
            if (labels[i] == 0) all.emplace_back(cosine_distance(query, pool.row(i)), ids[i]);
        std::sort(all.begin(), all.end());
        for (std::size_t i = 0; i < fast.ids.size(); ++i) {
            CHECK(fast.ids[i] == all[i].second);
            CHECK(fast.distances[i] == all[i].first);
        }
    }
}

TEST_CASE("claimed list enforces canonical order") {
    auto claimed = make_claimed({{3, 0.5, 0}, {1, 0.9, 1}, {2, 0.5, 0}});
    CHECK(claimed.entries[0].sample_id == 1);
    CHECK(claimed.entries[1].sample_id == 2); // tie broken by id
    CHECK(claimed.entries[2].sample_id == 3);
    CHECK_NOTHROW(claimed.validate());

    ClaimedMemberList bad;
    bad.entries = {{1, 0.2, 0}, {2, 0.9, 0}};
    CHECK_THROWS_AS(bad.validate(), FormatError);
}

TEST_CASE("search picks nearest same-class public neighbors and dedups") {
    auto ds = tiny_dataset(40, 5, 11);
    auto encoder = oracles::identity_encoder(5);
    std::vector<std::uint32_t> pool_ids;
    for (std::uint32_t i = 20; i < 40; ++i) pool_ids.push_back(i);

    SUBCASE("single member, single neighbor") {
        auto claimed = make_claimed({{0, 1.0, ds.labels[0]}});
        auto dd = discredit_search(encoder, claimed, ds, pool_ids, 1, 1);
        CHECK(dd.size() == 1);
        CHECK(dd.labels[0] == ds.labels[0]);
        CHECK(dd.provenance[0].method == DiscreditMethod::search);
        CHECK(dd.provenance[0].source_member_id == 0);
    }
    SUBCASE("two members sharing a neighbor keep one copy") {
        // members 0 and 1 get identical feature rows so they share neighbors
        for (std::size_t j = 0; j < 5; ++j) ds.samples(1, j) = ds.samples(0, j);
        ds.labels[1] = ds.labels[0];
        auto claimed = make_claimed({{0, 1.0, ds.labels[0]}, {1, 0.9, ds.labels[1]}});
        auto dd = discredit_search(encoder, claimed, ds, pool_ids, 2, 1);
        CHECK(dd.size() == 1);
    }
    SUBCASE("no same-class pool samples is an error") {
        for (std::uint32_t id : pool_ids) ds.labels[id] = 1;
        auto claimed = make_claimed({{0, 1.0, 0}});
        ds.labels[0] = 0;
        CHECK_THROWS_AS(discredit_search(encoder, claimed, ds, pool_ids, 1, 1), FormatError);
    }
    SUBCASE("a bitwise member copy in the pool is rejected") {
        for (std::size_t j = 0; j < 5; ++j) ds.samples(25, j) = ds.samples(0, j);
        ds.labels[25] = ds.labels[0];
        auto claimed = make_claimed({{0, 1.0, ds.labels[0]}});
        auto dd = discredit_search(encoder, claimed, ds, pool_ids, 1, 3);
        for (std::size_t i = 0; i < dd.size(); ++i)
            CHECK(std::memcmp(dd.samples.row(i).data(), ds.samples.row(0).data(), 5 * sizeof(double)) != 0);
    }
}

TEST_CASE("search output is invariant to pool ordering") {
    auto ds = tiny_dataset(60, 4, 13);
    auto encoder = oracles::identity_encoder(4);
    std::vector<std::uint32_t> pool_a, pool_b;
    for (std::uint32_t i = 30; i < 60; ++i) pool_a.push_back(i);
    pool_b.assign(pool_a.rbegin(), pool_a.rend());

    auto claimed = make_claimed({{2, 1.0, ds.labels[2]}, {5, 0.8, ds.labels[5]}});
    auto da = discredit_search(encoder, claimed, ds, pool_a, 2, 3);
    auto db = discredit_search(encoder, claimed, ds, pool_b, 2, 3);
    CHECK(da.samples.data() == db.samples.data());
    CHECK(da.labels == db.labels);
}

TEST_CASE("provenance distances recompute within 1e-9") {
    auto ds = tiny_dataset(50, 6, 17);
    auto encoder = oracles::identity_encoder(6);
    std::vector<std::uint32_t> pool_ids;
    for (std::uint32_t i = 25; i < 50; ++i) pool_ids.push_back(i);
    auto claimed = make_claimed({{0, 1.0, ds.labels[0]}, {1, 0.9, ds.labels[1]}, {2, 0.8, ds.labels[2]}});
    auto dd = discredit_search(encoder, claimed, ds, pool_ids, 3, 2);
    for (std::size_t i = 0; i < dd.size(); ++i) {
        std::vector<std::uint32_t> src = {static_cast<std::uint32_t>(dd.provenance[i].source_member_id)};
        auto member = ds.subset(src);
        Matrix one(1, ds.dim());
        std::copy(dd.samples.row(i).begin(), dd.samples.row(i).end(), one.row(0).begin());
        double d = cosine_distance(tinynn::encode(encoder, member.samples).row(0),
                                   tinynn::encode(encoder, one).row(0));
        CHECK(std::abs(d - dd.provenance[i].latent_distance) < 1e-9);
    }
}

TEST_CASE("generate keeps only probes the victim classifies as the member label") {
    // victim: logit margin along coordinate 0 decides between the classes
    tinynn::DenseNet victim = oracles::identity_encoder(2);
    victim.weights[1] = Matrix(2, 2);
    victim.weights[1](0, 0) = 10.0;
    victim.weights[1](0, 1) = -10.0;
    victim.biases[1] = {-5.0, 5.0}; // class 0 iff x0 > 0.5

    // generator: near-identity over the latent (an exact identity would
    // reproduce members bitwise, which the duplicate guard rejects)
    zoo::GeneratorModel gen;
    gen.net = oracles::identity_encoder(2);
    gen.net.weights[1] = Matrix(2, 2);
    gen.net.weights[1](0, 0) = 1.0;
    gen.net.weights[1](1, 1) = 1.0;
    gen.net.biases[1] = {1e-9, 1e-9};

    data::LabeledDataset ds;
    ds.samples = Matrix(2, 2);
    ds.samples(0, 0) = 0.9;
    ds.samples(0, 1) = 0.4; // member of class 0 territory
    ds.samples(1, 0) = 0.1;
    ds.samples(1, 1) = 0.6;
    ds.labels = {0, 1};
    ds.subpop_ids = {0, 0};
    ds.sample_ids = {0, 1};

    SUBCASE("noiseless probes of a correctly classified member are accepted") {
        auto claimed = make_claimed({{0, 1.0, 0}});
        auto dd = discredit_generate(victim, gen, claimed, ds, 1, 4, 0.0, 5);
        REQUIRE(dd.size() == 1); // identical probes dedup to one
        CHECK(dd.labels[0] == 0);
        CHECK(dd.samples(0, 0) == doctest::Approx(0.9));
    }
    SUBCASE("probes that cross the boundary are excluded") {
        // huge noise throws most probes into the wrong class; all kept ones
        // must still classify as the member label
        auto claimed = make_claimed({{0, 1.0, 0}});
        auto dd = discredit_generate(victim, gen, claimed, ds, 1, 64, 0.8, 6);
        for (std::size_t i = 0; i < dd.size(); ++i) {
            Matrix one(1, 2);
            std::copy(dd.samples.row(i).begin(), dd.samples.row(i).end(), one.row(0).begin());
            CHECK(tinynn::predict(victim, one)[0] == 0);
        }
    }
    SUBCASE("acceptance rate does not grow with noise") {
        auto claimed = make_claimed({{0, 1.0, 0}});
        auto small = discredit_generate(victim, gen, claimed, ds, 1, 64, 0.01, 7);
        auto large = discredit_generate(victim, gen, claimed, ds, 1, 64, 1.0, 7);
        CHECK(small.size() + 8 > large.size()); // small noise keeps probes in class
        CHECK(large.size() < 64);
    }
}

TEST_CASE("pgd analytic behavior") {
    auto encoder = oracles::identity_encoder(1);

    SUBCASE("already optimal start never moves") {
        std::vector<double> x0 = {0.5};
        PgdConfig cfg;
        cfg.iters = 20;
        auto r = pgd_latent_match(encoder, x0, x0, cfg, x0);
        CHECK(r.best[0] == 0.5);
        for (double m : r.mse_trace) CHECK(m == 0.0);
    }
    SUBCASE("clamped quadratic converges to the projection boundary") {
        std::vector<double> target = {0.6};
        std::vector<double> start = {0.5};
        PgdConfig cfg;
        cfg.step = 1.0; // large step
        cfg.iters = 50;
        cfg.epsilon = 0.05;
        for (auto rule : {PgdStepRule::sign, PgdStepRule::gradient}) {
            cfg.rule = rule;
            auto r = pgd_latent_match(encoder, target, start, cfg, start);
            CHECK(std::abs(r.best[0] - 0.55) < 1e-9);
            CHECK(std::abs(*std::min_element(r.mse_trace.begin(), r.mse_trace.end()) - 0.0025) < 1e-9);
        }
    }
    SUBCASE("returned best matches the trace minimum") {
        auto enc = tinynn::make_net({4, 6, 5, 2}, 3);
        oracles::Rng rng(9);
        std::vector<double> start(4), target(5), anchor(4);
        for (double& v : start) v = rng.uniform(0.1, 0.9);
        anchor = start;
        for (double& v : target) v = rng.uniform(0.0, 1.0);
        PgdConfig cfg;
        cfg.iters = 40;
        auto r = pgd_latent_match(enc, target, start, cfg, anchor);
        double trace_min = *std::min_element(r.mse_trace.begin(), r.mse_trace.end());
        CHECK(r.mse_trace[r.best_iter] == trace_min);

        Matrix one(1, 4);
        std::copy(r.best.begin(), r.best.end(), one.row(0).begin());
        Matrix lat = tinynn::encode(enc, one);
        double m = 0.0;
        for (std::size_t j = 0; j < 5; ++j) {
            double d = lat(0, j) - target[j];
            m += d * d;
        }
        CHECK(std::abs(m / 5.0 - trace_min) < 1e-12);
    }
    SUBCASE("more iterations never worsen the best") {
        auto enc = tinynn::make_net({3, 5, 4, 2}, 8);
        oracles::Rng rng(10);
        std::vector<double> start(3), target(4);
        for (double& v : start) v = rng.uniform(0.2, 0.8);
        for (double& v : target) v = rng.uniform(0.0, 1.0);
        PgdConfig cfg;
        double prev = std::numeric_limits<double>::infinity();
        for (std::size_t iters : {5u, 20u, 60u}) {
            cfg.iters = iters;
            auto r = pgd_latent_match(enc, target, start, cfg, start);
            double best = *std::min_element(r.mse_trace.begin(), r.mse_trace.end());
            CHECK(best <= prev + 1e-15);
            prev = best;
        }
    }
    SUBCASE("invalid step is rejected") {
        std::vector<double> x0 = {0.5};
        PgdConfig cfg;
        cfg.step = 0.0;
        CHECK_THROWS_AS(pgd_latent_match(encoder, x0, x0, cfg, x0), ConfigError);
    }
}

TEST_CASE("adversarial duplicate guard replaces exact convergence") {
    // gradient-rule halving walks the iterate onto the member bitwise; the
    // guard must then fall back to the last distinct iterate
    auto encoder = oracles::identity_encoder(1);
    data::LabeledDataset ds;
    ds.samples = Matrix(2, 1);
    ds.samples(0, 0) = 0.5;  // member
    ds.samples(1, 0) = 0.75; // pool start
    ds.labels = {0, 0};
    ds.subpop_ids = {0, 0};
    ds.sample_ids = {0, 1};
    std::vector<std::uint32_t> pool = {1};

    PgdConfig cfg;
    cfg.rule = PgdStepRule::gradient;
    cfg.step = 0.25; // halves the gap each iterate: x <- x - 0.5 (x - 0.5)
    cfg.iters = 1200;
    cfg.epsilon = 1.0;

    auto claimed = make_claimed({{0, 1.0, 0}});
    auto dd = discredit_adversarial(encoder, claimed, ds, pool, 1, 1, cfg, 3);
    REQUIRE(dd.size() == 1);
    CHECK(dd.samples(0, 0) != 0.5); // not the member, bitwise
    CHECK(dd.provenance[0].final_mse <= dd.provenance[0].initial_mse);
    CHECK(dd.provenance[0].final_mse < 1e-12);
}

TEST_CASE("adversarial provenance and budget behavior") {
    auto ds = tiny_dataset(30, 4, 23);
    auto encoder = tinynn::make_net({4, 8, 6, 2}, 5);
    std::vector<std::uint32_t> pool;
    for (std::uint32_t i = 10; i < 30; ++i) pool.push_back(i);
    auto claimed = make_claimed({{0, 1.0, ds.labels[0]}, {3, 0.7, ds.labels[3]}});

    PgdConfig cfg; // defaults: sign rule, eps 0.05, step 1e-3, 100 iters
    auto dd = discredit_adversarial(encoder, claimed, ds, pool, 2, 2, cfg, 7);
    CHECK(dd.size() >= 2);
    std::set<std::int64_t> sources;
    for (std::size_t i = 0; i < dd.size(); ++i) {
        const auto& rec = dd.provenance[i];
        CHECK(rec.method == DiscreditMethod::adversarial);
        CHECK(rec.final_mse <= rec.initial_mse); // best-iterate selection
        sources.insert(rec.source_member_id);
        for (double v : dd.samples.row(i)) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    CHECK(sources.size() == 2);
}

TEST_CASE("discrediting sets never contain bitwise duplicates") {
    auto ds = tiny_dataset(40, 4, 29);
    auto encoder = oracles::identity_encoder(4);
    std::vector<std::uint32_t> pool;
    for (std::uint32_t i = 10; i < 40; ++i) pool.push_back(i);
    auto claimed = make_claimed({{0, 1.0, ds.labels[0]},
                                 {1, 0.9, ds.labels[1]},
                                 {2, 0.8, ds.labels[2]},
                                 {3, 0.7, ds.labels[3]}});
    PgdConfig cfg;
    cfg.iters = 10;
    auto dd = discredit_adversarial(encoder, claimed, ds, pool, 4, 3, cfg, 11);
    std::set<std::vector<double>> rows;
    for (std::size_t i = 0; i < dd.size(); ++i)
        rows.emplace(dd.samples.row(i).begin(), dd.samples.row(i).end());
    CHECK(rows.size() == dd.size());
}

TEST_CASE("pool control set carries sentinel provenance") {
    auto ds = tiny_dataset(20, 3, 31);
    std::vector<std::uint32_t> pool = {4, 5, 6};
    auto dd = pool_as_discrediting(ds, pool);
    CHECK(dd.size() == 3);
    for (const auto& rec : dd.provenance) CHECK(rec.source_member_id == -1);
}

TEST_CASE("provenance CSV layout") {
    auto ds = tiny_dataset(20, 3, 37);
    auto encoder = oracles::identity_encoder(3);
    std::vector<std::uint32_t> pool;
    for (std::uint32_t i = 10; i < 20; ++i) pool.push_back(i);
    auto claimed = make_claimed({{0, 1.0, ds.labels[0]}});
    auto dd = discredit_search(encoder, claimed, ds, pool, 1, 2);
    auto path = std::filesystem::temp_directory_path() / "miaudit_prov.csv";
    write_provenance_csv(dd, path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "sample_id,method,source_member_id,latent_distance,initial_mse,final_mse,seed");
    std::getline(in, line);
    CHECK(line.find("search") != std::string::npos);
    std::filesystem::remove(path);
}
