#include "miaudit/discredit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "miaudit/errors.hpp"
#include "miaudit/parallel.hpp"
#include "miaudit/rng.hpp"

namespace miaudit::discredit {

double cosine_distance(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw DimensionError("cosine_distance: size mismatch");
    double un = l2_norm(u);
    double vn = l2_norm(v);
    if (un == 0.0 || vn == 0.0) throw DimensionError("cosine_distance: zero vector");
    return 1.0 - dot(u, v) / (un * vn);
}

KnnResult latent_knn(const Matrix& pool_latents, std::span<const std::uint32_t> pool_ids,
                     std::span<const int> pool_labels, std::span<const double> query_latent, int query_label,
                     std::size_t k) {
    if (pool_ids.size() != pool_latents.rows() || pool_labels.size() != pool_latents.rows())
        throw DimensionError("latent_knn: pool arrays mismatch");

    std::vector<std::pair<double, std::uint32_t>> cands;
    for (std::size_t i = 0; i < pool_latents.rows(); ++i) {
        if (pool_labels[i] != query_label) continue;
        cands.emplace_back(cosine_distance(query_latent, pool_latents.row(i)), pool_ids[i]);
    }
    KnnResult r;
    if (cands.empty()) {
        r.truncated = true;
        return r;
    }
    std::size_t take = std::min(k, cands.size());
    r.truncated = cands.size() < k;
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(take), cands.end());
    r.ids.reserve(take);
    r.distances.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        r.ids.push_back(cands[i].second);
        r.distances.push_back(cands[i].first);
    }
    return r;
}

void ClaimedMemberList::sort_canonical() {
    std::sort(entries.begin(), entries.end(), [](const ClaimedEntry& a, const ClaimedEntry& b) {
        if (a.raw_score != b.raw_score) return a.raw_score > b.raw_score;
        return a.sample_id < b.sample_id;
    });
}

void ClaimedMemberList::validate() const {
    std::unordered_set<std::uint32_t> seen;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (!seen.insert(entries[i].sample_id).second)
            throw FormatError("ClaimedMemberList: duplicate id " + std::to_string(entries[i].sample_id));
        if (i > 0 && (entries[i].raw_score > entries[i - 1].raw_score ||
                      (entries[i].raw_score == entries[i - 1].raw_score &&
                       entries[i].sample_id < entries[i - 1].sample_id)))
            throw FormatError("ClaimedMemberList: not in canonical order");
    }
}

std::string method_name(DiscreditMethod m) {
    switch (m) {
        case DiscreditMethod::search: return "search";
        case DiscreditMethod::generate: return "generate";
        case DiscreditMethod::adversarial: return "adversarial";
    }
    return "unknown";
}

DiscreditMethod method_from_name(const std::string& name) {
    for (DiscreditMethod m : {DiscreditMethod::search, DiscreditMethod::generate, DiscreditMethod::adversarial})
        if (method_name(m) == name) return m;
    throw ConfigError("unknown discredit method: " + name);
}

namespace {

// Bitwise row fingerprints of the member samples back the duplicate guard:
// a discrediting sample that equals a member byte-for-byte cannot prove
// anything about nonmembers.
struct RowHasher {
    std::unordered_set<std::uint64_t> hashes;

    static std::uint64_t hash_row(std::span<const double> row) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (double v : row) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, 8);
            for (int b = 0; b < 8; ++b) {
                h ^= (bits >> (8 * b)) & 0xff;
                h *= 0x100000001b3ULL;
            }
        }
        return h;
    }

    void add(std::span<const double> row) { hashes.insert(hash_row(row)); }
    bool maybe_contains(std::span<const double> row) const { return hashes.contains(hash_row(row)); }
};

bool rows_equal(std::span<const double> a, std::span<const double> b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

struct MemberIndex {
    RowHasher hasher;
    const Matrix* samples;

    bool is_member_row(std::span<const double> row) const {
        if (!hasher.maybe_contains(row)) return false;
        for (std::size_t i = 0; i < samples->rows(); ++i)
            if (rows_equal(samples->row(i), row)) return true;
        return false;
    }
};

std::vector<ClaimedEntry> top_claimed(const ClaimedMemberList& claimed, std::size_t n_c) {
    claimed.validate();
    std::size_t take = std::min(n_c, claimed.entries.size());
    return {claimed.entries.begin(), claimed.entries.begin() + static_cast<std::ptrdiff_t>(take)};
}

DiscreditingDataset collect(const Matrix& samples, std::vector<int> labels, std::vector<ProvenanceRecord> prov) {
    DiscreditingDataset dd;
    dd.samples = samples;
    dd.labels = std::move(labels);
    dd.provenance = std::move(prov);
    return dd;
}

} // namespace

DiscreditingDataset discredit_search(const DenseNet& encoder, const ClaimedMemberList& claimed,
                                     const LabeledDataset& ds, std::span<const std::uint32_t> public_pool_ids,
                                     std::size_t n_c, std::size_t n_n) {
    auto top = top_claimed(claimed, n_c);
    LabeledDataset pool = ds.subset(public_pool_ids);
    Matrix pool_latents = tinynn::encode(encoder, pool.samples);

    std::vector<std::uint32_t> member_ids;
    for (const auto& e : top) member_ids.push_back(e.sample_id);
    LabeledDataset members = ds.subset(member_ids);
    Matrix member_latents = tinynn::encode(encoder, members.samples);

    MemberIndex member_index{{}, &members.samples};
    for (std::size_t i = 0; i < members.samples.rows(); ++i) member_index.hasher.add(members.samples.row(i));

    // Keep the smallest-distance occurrence per pool id; claimed-member rank
    // breaks provenance ties deterministically.
    std::map<std::uint32_t, ProvenanceRecord> picked;
    for (std::size_t i = 0; i < top.size(); ++i) {
        KnnResult knn =
            latent_knn(pool_latents, pool.sample_ids, pool.labels, member_latents.row(i), top[i].label, n_n);
        for (std::size_t j = 0; j < knn.ids.size(); ++j) {
            ProvenanceRecord rec;
            rec.method = DiscreditMethod::search;
            rec.source_member_id = top[i].sample_id;
            rec.latent_distance = knn.distances[j];
            auto it = picked.find(knn.ids[j]);
            if (it == picked.end() || rec.latent_distance < it->second.latent_distance) picked[knn.ids[j]] = rec;
        }
    }

    std::vector<std::uint32_t> dd_ids;
    std::vector<ProvenanceRecord> prov;
    for (const auto& [id, rec] : picked) {
        dd_ids.push_back(id);
        prov.push_back(rec);
    }
    LabeledDataset rows = ds.subset(dd_ids);

    // Drop pool rows that happen to be bitwise copies of a claimed member.
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (!member_index.is_member_row(rows.samples.row(i))) keep.push_back(i);
    if (keep.empty()) throw FormatError("discredit_search: no discrediting samples after deduplication");

    Matrix samples = rows.samples.select_rows(keep);
    std::vector<int> labels;
    std::vector<ProvenanceRecord> kept_prov;
    for (std::size_t i : keep) {
        labels.push_back(rows.labels[i]);
        kept_prov.push_back(prov[i]);
    }
    return collect(samples, std::move(labels), std::move(kept_prov));
}

DiscreditingDataset discredit_generate(const DenseNet& victim, const GeneratorModel& generator,
                                       const ClaimedMemberList& claimed, const LabeledDataset& ds, std::size_t n_c,
                                       std::size_t n_n, double noise_sigma, std::uint64_t seed) {
    auto top = top_claimed(claimed, n_c);
    std::vector<std::uint32_t> member_ids;
    for (const auto& e : top) member_ids.push_back(e.sample_id);
    LabeledDataset members = ds.subset(member_ids);
    Matrix member_latents = tinynn::encode(victim, members.samples);

    MemberIndex member_index{{}, &members.samples};
    for (std::size_t i = 0; i < members.samples.rows(); ++i) member_index.hasher.add(members.samples.row(i));

    std::vector<std::vector<double>> out_rows;
    std::vector<int> labels;
    std::vector<ProvenanceRecord> prov;
    RowHasher emitted;

    for (std::size_t i = 0; i < top.size(); ++i) {
        std::uint64_t member_seed = derive_seed(seed, "discredit-generate", top[i].sample_id);
        Rng rng(member_seed);
        std::size_t accepted = 0;
        for (std::size_t j = 0; j < n_n; ++j) {
            Matrix z(1, member_latents.cols());
            auto base = member_latents.row(i);
            for (std::size_t d = 0; d < z.cols(); ++d) z(0, d) = base[d] + rng.normal(0.0, noise_sigma);
            Matrix x = generator.generate(z);
            auto pred = tinynn::predict(victim, x);
            if (pred[0] != top[i].label) continue; // victim must agree with the member label
            auto row = x.row(0);
            if (member_index.is_member_row(row)) continue;
            if (emitted.maybe_contains(row)) {
                bool dup = false;
                for (const auto& prev : out_rows)
                    if (rows_equal(prev, row)) {
                        dup = true;
                        break;
                    }
                if (dup) continue;
            }
            emitted.add(row);
            out_rows.emplace_back(row.begin(), row.end());
            labels.push_back(top[i].label);
            ProvenanceRecord rec;
            rec.method = DiscreditMethod::generate;
            rec.source_member_id = top[i].sample_id;
            rec.latent_distance = cosine_distance(member_latents.row(i), tinynn::encode(victim, x).row(0));
            rec.seed = member_seed;
            prov.push_back(rec);
            ++accepted;
        }
        (void)accepted; // zero acceptances: member skipped, nothing emitted
    }

    DiscreditingDataset dd;
    dd.samples = Matrix(out_rows.size(), ds.dim());
    for (std::size_t i = 0; i < out_rows.size(); ++i)
        std::copy(out_rows[i].begin(), out_rows[i].end(), dd.samples.row(i).begin());
    dd.labels = std::move(labels);
    dd.provenance = std::move(prov);
    return dd;
}

PgdResult pgd_latent_match(const DenseNet& encoder, std::span<const double> target_latent,
                           std::span<const double> start, const PgdConfig& cfg, std::span<const double> anchor,
                           bool record_iterates) {
    if (cfg.step <= 0.0) throw ConfigError("pgd: step must be > 0");
    if (start.size() != anchor.size()) throw DimensionError("pgd: start/anchor size mismatch");

    auto latent_mse = [&](std::span<const double> x) {
        Matrix batch(1, x.size());
        std::copy(x.begin(), x.end(), batch.row(0).begin());
        auto lat = tinynn::encode(encoder, batch);
        double s = 0.0;
        for (std::size_t j = 0; j < target_latent.size(); ++j) {
            double d = lat(0, j) - target_latent[j];
            s += d * d;
        }
        return s / static_cast<double>(target_latent.size());
    };

    std::vector<double> x(start.begin(), start.end());
    PgdResult res;
    res.best = x;
    res.mse_trace.push_back(latent_mse(x));
    res.best_iter = 0;
    if (record_iterates) res.iterates.push_back(x);

    double best_mse = res.mse_trace[0];
    for (std::size_t it = 1; it <= cfg.iters; ++it) {
        auto grad = tinynn::grad_wrt_input(encoder, x, target_latent);
        for (double g : grad)
            if (!std::isfinite(g))
                throw DivergenceError("pgd: non-finite gradient at iteration " + std::to_string(it));
        for (std::size_t j = 0; j < x.size(); ++j) {
            double d = cfg.rule == PgdStepRule::sign ? (grad[j] > 0.0 ? 1.0 : (grad[j] < 0.0 ? -1.0 : 0.0))
                                                     : grad[j];
            double v = x[j] - cfg.step * d;
            v = std::clamp(v, anchor[j] - cfg.epsilon, anchor[j] + cfg.epsilon);
            x[j] = std::clamp(v, 0.0, 1.0);
        }
        double m = latent_mse(x);
        res.mse_trace.push_back(m);
        if (record_iterates) res.iterates.push_back(x);
        if (m < best_mse) {
            best_mse = m;
            res.best = x;
            res.best_iter = it;
        }
    }
    return res;
}

DiscreditingDataset discredit_adversarial(const DenseNet& encoder, const ClaimedMemberList& claimed,
                                          const LabeledDataset& ds, std::span<const std::uint32_t> pool_ids,
                                          std::size_t n_c, std::size_t n_n, const PgdConfig& cfg,
                                          std::uint64_t seed, std::size_t workers) {
    auto top = top_claimed(claimed, n_c);
    LabeledDataset pool = ds.subset(pool_ids);
    Matrix pool_latents = tinynn::encode(encoder, pool.samples);

    std::vector<std::uint32_t> member_ids;
    for (const auto& e : top) member_ids.push_back(e.sample_id);
    LabeledDataset members = ds.subset(member_ids);
    Matrix member_latents = tinynn::encode(encoder, members.samples);

    MemberIndex member_index{{}, &members.samples};
    for (std::size_t i = 0; i < members.samples.rows(); ++i) member_index.hasher.add(members.samples.row(i));

    struct WorkItem {
        std::size_t member_idx;
        std::uint32_t start_id;
        double start_distance;
    };
    std::vector<WorkItem> items;
    for (std::size_t i = 0; i < top.size(); ++i) {
        KnnResult knn =
            latent_knn(pool_latents, pool.sample_ids, pool.labels, member_latents.row(i), top[i].label, n_n);
        for (std::size_t j = 0; j < knn.ids.size(); ++j)
            items.push_back({i, knn.ids[j], knn.distances[j]});
    }

    std::vector<std::vector<double>> rows(items.size());
    std::vector<ProvenanceRecord> prov(items.size());
    std::unordered_map<std::uint32_t, std::size_t> pool_row;
    for (std::size_t i = 0; i < pool.size(); ++i) pool_row.emplace(pool.sample_ids[i], i);

    parallel_for(items.size(), workers, [&](std::size_t w) {
        const WorkItem& item = items[w];
        auto start = pool.samples.row(pool_row.at(item.start_id));
        PgdResult pgd = pgd_latent_match(encoder, member_latents.row(item.member_idx), start, cfg, start, true);

        std::vector<double> chosen = pgd.best;
        if (member_index.is_member_row(chosen)) {
            // Replace an exact collision with the last distinct iterate.
            chosen.clear();
            for (std::size_t it = pgd.iterates.size(); it-- > 0;) {
                if (!member_index.is_member_row(pgd.iterates[it])) {
                    chosen = pgd.iterates[it];
                    break;
                }
            }
        }
        ProvenanceRecord rec;
        rec.method = DiscreditMethod::adversarial;
        rec.source_member_id = top[item.member_idx].sample_id;
        rec.initial_mse = pgd.mse_trace.front();
        rec.final_mse = *std::min_element(pgd.mse_trace.begin(), pgd.mse_trace.end());
        rec.seed = seed;
        if (!chosen.empty()) {
            Matrix batch(1, chosen.size());
            std::copy(chosen.begin(), chosen.end(), batch.row(0).begin());
            rec.latent_distance =
                cosine_distance(member_latents.row(item.member_idx), tinynn::encode(encoder, batch).row(0));
        }
        rows[w] = std::move(chosen);
        prov[w] = rec;
    });

    // Merge in claimed-member rank order, dropping collisions and exact
    // duplicates among the emitted rows.
    std::vector<std::vector<double>> out_rows;
    std::vector<int> labels;
    std::vector<ProvenanceRecord> out_prov;
    RowHasher emitted;
    for (std::size_t w = 0; w < items.size(); ++w) {
        if (rows[w].empty()) continue;
        bool dup = false;
        if (emitted.maybe_contains(rows[w])) {
            for (const auto& prev : out_rows)
                if (rows_equal(prev, rows[w])) {
                    dup = true;
                    break;
                }
        }
        if (dup) continue;
        emitted.add(rows[w]);
        out_rows.push_back(std::move(rows[w]));
        labels.push_back(top[items[w].member_idx].label);
        out_prov.push_back(prov[w]);
    }

    DiscreditingDataset dd;
    dd.samples = Matrix(out_rows.size(), ds.dim());
    for (std::size_t i = 0; i < out_rows.size(); ++i)
        std::copy(out_rows[i].begin(), out_rows[i].end(), dd.samples.row(i).begin());
    dd.labels = std::move(labels);
    dd.provenance = std::move(out_prov);
    return dd;
}

DiscreditingDataset pool_as_discrediting(const LabeledDataset& ds, std::span<const std::uint32_t> pool_ids) {
    LabeledDataset pool = ds.subset(pool_ids);
    DiscreditingDataset dd;
    dd.samples = pool.samples;
    dd.labels = pool.labels;
    dd.provenance.assign(pool.size(), ProvenanceRecord{DiscreditMethod::search, -1, 0.0, 0.0, 0.0, 0});
    return dd;
}

void write_provenance_csv(const DiscreditingDataset& dd, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open for write: " + path.string());
    out << "sample_id,method,source_member_id,latent_distance,initial_mse,final_mse,seed\n";
    char buf[3][32];
    for (std::size_t i = 0; i < dd.size(); ++i) {
        const auto& r = dd.provenance[i];
        std::snprintf(buf[0], sizeof buf[0], "%.17g", r.latent_distance);
        std::snprintf(buf[1], sizeof buf[1], "%.17g", r.initial_mse);
        std::snprintf(buf[2], sizeof buf[2], "%.17g", r.final_mse);
        out << i << ',' << method_name(r.method) << ',' << r.source_member_id << ',' << buf[0] << ',' << buf[1]
            << ',' << buf[2] << ',' << r.seed << "\n";
    }
}

} // namespace miaudit::discredit
