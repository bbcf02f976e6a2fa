#include "miaudit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>

#include "miaudit/errors.hpp"

namespace miaudit::metrics {

RocCurve roc(std::span<const double> scores, std::span<const std::uint8_t> is_member) {
    if (scores.size() != is_member.size()) throw DimensionError("roc: size mismatch");
    std::size_t pos = 0, neg = 0;
    for (std::uint8_t m : is_member) (m ? pos : neg)++;
    if (pos == 0 || neg == 0) throw DimensionError("roc: both classes must be present");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocCurve curve;
    curve.thresholds.push_back(std::numeric_limits<double>::infinity());
    curve.fpr.push_back(0.0);
    curve.tpr.push_back(0.0);

    // Tie groups yield one sweep point each; the pair statistic accumulates
    // wins plus half-credit for ties, which is exactly the trapezoid area of
    // the step curve.
    double wins = 0.0;
    std::size_t seen_pos = 0, seen_neg = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        std::size_t g_pos = 0, g_neg = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            (is_member[order[j]] ? g_pos : g_neg)++;
            ++j;
        }
        wins += static_cast<double>(g_neg) * static_cast<double>(seen_pos) +
                0.5 * static_cast<double>(g_pos) * static_cast<double>(g_neg);
        seen_pos += g_pos;
        seen_neg += g_neg;
        curve.thresholds.push_back(scores[order[i]]);
        curve.fpr.push_back(static_cast<double>(seen_neg) / static_cast<double>(neg));
        curve.tpr.push_back(static_cast<double>(seen_pos) / static_cast<double>(pos));
        i = j;
    }
    curve.auc = wins / (static_cast<double>(pos) * static_cast<double>(neg));
    return curve;
}

std::optional<BandPoint> tpr_at_fpr_range(const RocCurve& curve, double lo, double hi) {
    if (!(lo < hi)) throw ConfigError("tpr_at_fpr_range: need lo < hi");
    std::optional<BandPoint> best;
    for (std::size_t i = 0; i < curve.fpr.size(); ++i) {
        double f = curve.fpr[i];
        if (f < lo || f > hi) continue;
        if (!best || f < best->achieved_fpr || (f == best->achieved_fpr && curve.tpr[i] > best->tpr))
            best = BandPoint{curve.thresholds[i], curve.tpr[i], f};
    }
    return best;
}

namespace {

double fraction_at_least(std::span<const double> scores, double t) {
    std::size_t c = 0;
    for (double s : scores)
        if (s >= t) ++c;
    return scores.empty() ? 0.0 : static_cast<double>(c) / static_cast<double>(scores.size());
}

} // namespace

FprFprCurve fpr_fpr(std::span<const double> auditor_nonmember_scores, std::span<const double> discredit_scores,
                    std::span<const double> thresholds) {
    if (discredit_scores.empty()) throw DimensionError("fpr_fpr: empty discrediting score set");
    for (std::size_t i = 1; i < thresholds.size(); ++i)
        if (thresholds[i] > thresholds[i - 1]) throw ConfigError("fpr_fpr: thresholds must be descending");
    FprFprCurve curve;
    curve.thresholds.assign(thresholds.begin(), thresholds.end());
    curve.fpr_auditor.reserve(thresholds.size());
    curve.fpr_discredit.reserve(thresholds.size());
    for (double t : thresholds) {
        curve.fpr_auditor.push_back(fraction_at_least(auditor_nonmember_scores, t));
        curve.fpr_discredit.push_back(fraction_at_least(discredit_scores, t));
    }
    return curve;
}

RatioReport ratio_at_min_fpr(std::span<const double> auditor_nonmember_scores,
                             std::span<const double> discredit_scores, std::span<const double> member_scores) {
    if (auditor_nonmember_scores.empty() || discredit_scores.empty() || member_scores.empty())
        throw DimensionError("ratio_at_min_fpr: empty input");

    double max_nonmember = *std::max_element(auditor_nonmember_scores.begin(), auditor_nonmember_scores.end());

    RatioReport report;
    // Highest member-score threshold that still catches a nonmember.
    double best = -std::numeric_limits<double>::infinity();
    bool found = false;
    for (double t : member_scores) {
        if (t <= max_nonmember && t > best) {
            best = t;
            found = true;
        }
    }
    if (!found) {
        report.degenerate = true;
        best = *std::max_element(member_scores.begin(), member_scores.end());
    }
    report.threshold = best;
    report.auditor_min_fpr = fraction_at_least(auditor_nonmember_scores, best);
    report.discredit_fpr = fraction_at_least(discredit_scores, best);
    if (report.auditor_min_fpr > 0.0)
        report.ratio = report.discredit_fpr / report.auditor_min_fpr;
    else
        report.ratio = report.discredit_fpr > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
    return report;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 3) throw DimensionError("pearson: need equal lengths >= 3");
    double n = static_cast<double>(x.size());
    double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw DimensionError("pearson: zero variance");
    return sxy / std::sqrt(sxx * syy);
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
        double avg = (static_cast<double>(i) + static_cast<double>(j - 1)) / 2.0 + 1.0;
        for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
        i = j;
    }
    return ranks;
}

} // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
    auto rx = average_ranks(x);
    auto ry = average_ranks(y);
    return pearson(rx, ry);
}

Histogram histogram(std::span<const double> values, std::size_t bins) {
    if (values.empty()) throw DimensionError("histogram: empty input");
    if (bins == 0) throw ConfigError("histogram: need at least one bin");
    double lo = *std::min_element(values.begin(), values.end());
    double hi = *std::max_element(values.begin(), values.end());
    Histogram h;
    h.edges.resize(bins + 1);
    h.counts.assign(bins, 0);
    double width = (hi - lo) / static_cast<double>(bins);
    for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = lo + width * static_cast<double>(b);
    h.edges.back() = hi;
    for (double v : values) {
        std::size_t b;
        if (width == 0.0)
            b = 0;
        else
            b = std::min(bins - 1, static_cast<std::size_t>((v - lo) / width));
        h.counts[b]++;
    }
    return h;
}

void write_roc_csv(const RocCurve& curve, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open for write: " + path.string());
    out << "threshold,fpr,tpr\n";
    char buf[3][32];
    for (std::size_t i = 0; i < curve.thresholds.size(); ++i) {
        std::snprintf(buf[0], sizeof buf[0], "%.17g", curve.thresholds[i]);
        std::snprintf(buf[1], sizeof buf[1], "%.17g", curve.fpr[i]);
        std::snprintf(buf[2], sizeof buf[2], "%.17g", curve.tpr[i]);
        out << buf[0] << ',' << buf[1] << ',' << buf[2] << "\n";
    }
}

void write_fprfpr_csv(const FprFprCurve& curve, const std::filesystem::path& path, bool log_floor,
                      std::size_t n_auditor, std::size_t n_discredit) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open for write: " + path.string());
    out << "threshold,fpr_auditor,fpr_discredit\n";
    double floor_a = log_floor && n_auditor > 0 ? 1.0 / (2.0 * static_cast<double>(n_auditor)) : 0.0;
    double floor_d = log_floor && n_discredit > 0 ? 1.0 / (2.0 * static_cast<double>(n_discredit)) : 0.0;
    char buf[3][32];
    for (std::size_t i = 0; i < curve.thresholds.size(); ++i) {
        double fa = curve.fpr_auditor[i];
        double fd = curve.fpr_discredit[i];
        if (log_floor) {
            fa = std::max(fa, floor_a);
            fd = std::max(fd, floor_d);
        }
        std::snprintf(buf[0], sizeof buf[0], "%.17g", curve.thresholds[i]);
        std::snprintf(buf[1], sizeof buf[1], "%.17g", fa);
        std::snprintf(buf[2], sizeof buf[2], "%.17g", fd);
        out << buf[0] << ',' << buf[1] << ',' << buf[2] << "\n";
    }
}

} // namespace miaudit::metrics
