#pragma once

#include <span>
#include <string>
#include <vector>

namespace mdiqa {

/// Absolute correlation statistics between predictions and ground truth.
/// Every function throws DegenerateInputError instead of returning NaN.
struct MetricReport {
    double plcc = 0.0;
    double srocc = 0.0;
    double krocc = 0.0;
    double overall = 0.0;
    std::size_t n = 0;
};

double plcc(std::span<const double> x, std::span<const double> y);

/// Spearman. Closed-form rank-difference formula when neither vector has ties,
/// otherwise Pearson on average ranks.
double srocc(std::span<const double> x, std::span<const double> y);

/// Kendall tau-a: |C - D| / (n choose 2), pairs tied in either vector count
/// as neither concordant nor discordant. O(n log n).
double krocc(std::span<const double> x, std::span<const double> y);

double overall(std::span<const double> x, std::span<const double> y);

MetricReport evaluate_metrics(std::span<const double> predictions, std::span<const double> truth);

/// 1-based ranks; tied values share their average rank.
std::vector<double> average_ranks(std::span<const double> v);

/// "key: value" lines with full round-trip precision.
std::string format_report(const MetricReport& report, int precision = 17);

} // namespace mdiqa
