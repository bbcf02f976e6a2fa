#include "miaudit/idx.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "miaudit/errors.hpp"
#include "miaudit/rng.hpp"

namespace miaudit::data {

namespace {

std::uint32_t get_u32_be(std::ifstream& in, const std::string& what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError("IDX: truncated " + what);
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// Seeded k-means++ followed by Lloyd iterations over the given rows.
std::vector<int> kmeans(const Matrix& samples, const std::vector<std::size_t>& rows, std::size_t k,
                        std::size_t iters, std::uint64_t seed) {
    k = std::min(k, rows.size());
    Rng rng(seed);
    std::size_t dim = samples.cols();

    std::vector<std::vector<double>> centers;
    centers.reserve(k);
    std::vector<double> d2(rows.size(), std::numeric_limits<double>::infinity());
    {
        auto first = samples.row(rows[rng.below(rows.size())]);
        centers.emplace_back(first.begin(), first.end());
    }
    while (centers.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            d2[i] = std::min(d2[i], sq_dist(samples.row(rows[i]), centers.back()));
            total += d2[i];
        }
        std::size_t pick = rows.size() - 1;
        if (total > 0.0) {
            double r = rng.uniform() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < rows.size(); ++i) {
                acc += d2[i];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        }
        auto row = samples.row(rows[pick]);
        centers.emplace_back(row.begin(), row.end());
    }

    std::vector<int> assign(rows.size(), 0);
    for (std::size_t it = 0; it < iters; ++it) {
        bool changed = false;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            auto row = samples.row(rows[i]);
            int best = 0;
            double best_d = sq_dist(row, centers[0]);
            for (std::size_t c = 1; c < centers.size(); ++c) {
                double d = sq_dist(row, centers[c]);
                if (d < best_d) {
                    best_d = d;
                    best = static_cast<int>(c);
                }
            }
            if (assign[i] != best) changed = true;
            assign[i] = best;
        }
        std::vector<std::vector<double>> sums(centers.size(), std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(centers.size(), 0);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            auto row = samples.row(rows[i]);
            auto& s = sums[static_cast<std::size_t>(assign[i])];
            for (std::size_t d = 0; d < dim; ++d) s[d] += row[d];
            counts[static_cast<std::size_t>(assign[i])]++;
        }
        for (std::size_t c = 0; c < centers.size(); ++c) {
            if (counts[c] == 0) continue;
            for (std::size_t d = 0; d < dim; ++d) centers[c][d] = sums[c][d] / static_cast<double>(counts[c]);
        }
        if (!changed) break;
    }
    return assign;
}

} // namespace

LabeledDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                        const IdxOptions& opt) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw FormatError("cannot open: " + images_path.string());
    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw FormatError("cannot open: " + labels_path.string());

    if (get_u32_be(imgs, "image magic") != 0x00000803u)
        throw FormatError("IDX: bad image magic in " + images_path.string());
    std::uint32_t n = get_u32_be(imgs, "image count");
    std::uint32_t rows = get_u32_be(imgs, "rows");
    std::uint32_t cols = get_u32_be(imgs, "cols");

    if (get_u32_be(labs, "label magic") != 0x00000801u)
        throw FormatError("IDX: bad label magic in " + labels_path.string());
    std::uint32_t n_labels = get_u32_be(labs, "label count");
    if (n != n_labels)
        throw FormatError("IDX: image count " + std::to_string(n) + " != label count " + std::to_string(n_labels));

    std::size_t dim = static_cast<std::size_t>(rows) * cols;
    LabeledDataset ds;
    ds.samples = Matrix(n, dim);
    ds.labels.resize(n);
    ds.subpop_ids.assign(n, 0);
    ds.sample_ids.resize(n);

    std::vector<unsigned char> buf(dim);
    for (std::uint32_t i = 0; i < n; ++i) {
        imgs.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(dim));
        if (!imgs) throw FormatError("IDX: truncated image data");
        auto out = ds.samples.row(i);
        for (std::size_t d = 0; d < dim; ++d) out[d] = static_cast<double>(buf[d]) / 255.0;
        ds.sample_ids[i] = i;
    }
    for (std::uint32_t i = 0; i < n; ++i) {
        unsigned char l;
        labs.read(reinterpret_cast<char*>(&l), 1);
        if (!labs) throw FormatError("IDX: truncated label data");
        ds.labels[i] = static_cast<int>(l);
    }

    // Ingested data has no generator-assigned subpopulations; cluster each
    // class in pixel space instead.
    int classes = ds.num_classes();
    for (int c = 0; c < classes; ++c) {
        std::vector<std::size_t> class_rows;
        for (std::size_t i = 0; i < ds.size(); ++i)
            if (ds.labels[i] == c) class_rows.push_back(i);
        if (class_rows.empty()) continue;
        auto assign = kmeans(ds.samples, class_rows, opt.kmeans_per_class, opt.kmeans_iters,
                             derive_seed(opt.seed, "idx-kmeans", static_cast<std::uint64_t>(c)));
        for (std::size_t i = 0; i < class_rows.size(); ++i)
            ds.subpop_ids[class_rows[i]] =
                c * static_cast<int>(opt.kmeans_per_class) + assign[i];
    }
    ds.validate();
    return ds;
}

} // namespace miaudit::data
