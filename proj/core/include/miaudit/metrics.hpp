#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace miaudit::metrics {

// Exact step-function ROC swept over the unique scores (descending, with a
// +inf sentinel so the curve starts at (0,0)). Classification uses the
// >=-threshold convention throughout.
struct RocCurve {
    std::vector<double> thresholds;
    std::vector<double> fpr;
    std::vector<double> tpr;
    double auc = 0.0; // Mann-Whitney pair statistic, ties counted 1/2
};

RocCurve roc(std::span<const double> scores, std::span<const std::uint8_t> is_member);

struct BandPoint {
    double threshold;
    double tpr;
    double achieved_fpr;
};

// Lowest-FPR sweep point inside [lo, hi] (ties resolved to the highest TPR);
// empty when finite-sample granularity cannot reach the band.
std::optional<BandPoint> tpr_at_fpr_range(const RocCurve& curve, double lo, double hi);

// The two low-FPR reporting bands used by the summary tables, as fractions.
inline constexpr double kLowBandLo = 0.0001;
inline constexpr double kLowBandHi = 0.0003;
inline constexpr double kMidBandLo = 0.01;
inline constexpr double kMidBandHi = 0.03;

struct FprFprCurve {
    std::vector<double> thresholds; // descending
    std::vector<double> fpr_auditor;
    std::vector<double> fpr_discredit;
};

FprFprCurve fpr_fpr(std::span<const double> auditor_nonmember_scores, std::span<const double> discredit_scores,
                    std::span<const double> thresholds);

struct RatioReport {
    double threshold = 0.0;
    double auditor_min_fpr = 0.0;
    double discredit_fpr = 0.0;
    double ratio = 1.0;
    bool degenerate = false; // no member-score threshold produced an auditor FP
};

// Sweeps the member scores as candidate claim thresholds, takes the highest
// one that yields at least one auditor false positive, and reports both
// sides' FPR there. Falls back to the top member score when even the lowest
// member score beats every nonmember.
RatioReport ratio_at_min_fpr(std::span<const double> auditor_nonmember_scores,
                             std::span<const double> discredit_scores, std::span<const double> member_scores);

double pearson(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);

struct Histogram {
    std::vector<double> edges;        // size bins+1, equal width over [min,max]
    std::vector<std::size_t> counts;  // size bins
};

Histogram histogram(std::span<const double> values, std::size_t bins);

void write_roc_csv(const RocCurve& curve, const std::filesystem::path& path);

// Optional log-floor: zero FPRs are lifted to 1/(2n) per side for log-log
// rendering. That floor never feeds back into reported ratios.
void write_fprfpr_csv(const FprFprCurve& curve, const std::filesystem::path& path, bool log_floor = false,
                      std::size_t n_auditor = 0, std::size_t n_discredit = 0);

} // namespace miaudit::metrics
