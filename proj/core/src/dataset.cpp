#include "miaudit/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>

#include "miaudit/errors.hpp"

namespace miaudit::data {

int LabeledDataset::num_classes() const {
    int mx = -1;
    for (int l : labels) mx = std::max(mx, l);
    return mx + 1;
}

void LabeledDataset::validate() const {
    std::size_t n = samples.rows();
    if (labels.size() != n || subpop_ids.size() != n || sample_ids.size() != n)
        throw DimensionError("LabeledDataset: array length mismatch");
    for (double v : samples.data()) {
        if (!std::isfinite(v) || v < 0.0 || v > 1.0)
            throw FormatError("LabeledDataset: feature outside [0,1]");
    }
    for (int l : labels)
        if (l < 0) throw FormatError("LabeledDataset: negative label");
}

std::vector<std::size_t> LabeledDataset::rows_of(std::span<const std::uint32_t> ids) const {
    std::unordered_map<std::uint32_t, std::size_t> index;
    index.reserve(sample_ids.size());
    for (std::size_t i = 0; i < sample_ids.size(); ++i) index.emplace(sample_ids[i], i);
    std::vector<std::size_t> rows;
    rows.reserve(ids.size());
    for (std::uint32_t id : ids) {
        auto it = index.find(id);
        if (it == index.end()) throw FormatError("unknown sample id " + std::to_string(id));
        rows.push_back(it->second);
    }
    return rows;
}

LabeledDataset LabeledDataset::subset(std::span<const std::uint32_t> ids) const {
    auto rows = rows_of(ids);
    LabeledDataset out;
    out.samples = samples.select_rows(rows);
    out.labels.reserve(rows.size());
    out.subpop_ids.reserve(rows.size());
    out.sample_ids.reserve(rows.size());
    for (std::size_t r : rows) {
        out.labels.push_back(labels[r]);
        out.subpop_ids.push_back(subpop_ids[r]);
        out.sample_ids.push_back(sample_ids[r]);
    }
    return out;
}

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in, const char* what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError(std::string("MIDS: truncated ") + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ofstream& out, double v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::ifstream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw FormatError("MIDS: truncated features");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

} // namespace

void save_mids(const LabeledDataset& ds, const std::filesystem::path& path) {
    ds.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for write: " + path.string());
    out.write("MIDS", 4);
    put_u32(out, static_cast<std::uint32_t>(ds.size()));
    put_u32(out, static_cast<std::uint32_t>(ds.dim()));
    for (double v : ds.samples.data()) put_f64(out, v);
    for (int v : ds.labels) put_u32(out, static_cast<std::uint32_t>(v));
    for (int v : ds.subpop_ids) put_u32(out, static_cast<std::uint32_t>(v));
    for (std::uint32_t v : ds.sample_ids) put_u32(out, v);
    if (!out) throw FormatError("write failed: " + path.string());
}

LabeledDataset load_mids(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "MIDS", 4) != 0) throw FormatError("MIDS: bad magic in " + path.string());
    std::uint32_t n = get_u32(in, "count");
    std::uint32_t d = get_u32(in, "dim");
    LabeledDataset ds;
    ds.samples = Matrix(n, d);
    for (double& v : ds.samples.data()) v = get_f64(in);
    ds.labels.resize(n);
    for (int& v : ds.labels) v = static_cast<int>(get_u32(in, "labels"));
    ds.subpop_ids.resize(n);
    for (int& v : ds.subpop_ids) v = static_cast<int>(get_u32(in, "subpops"));
    ds.sample_ids.resize(n);
    for (std::uint32_t& v : ds.sample_ids) v = get_u32(in, "sample ids");
    ds.validate();
    return ds;
}

void export_csv(const LabeledDataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open for write: " + path.string());
    out << "id,label,subpop";
    for (std::size_t c = 0; c < ds.dim(); ++c) out << ",f" << c;
    out << "\n";
    char buf[32];
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out << ds.sample_ids[i] << ',' << ds.labels[i] << ',' << ds.subpop_ids[i];
        auto row = ds.samples.row(i);
        for (double v : row) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out << ',' << buf;
        }
        out << "\n";
    }
}

} // namespace miaudit::data
