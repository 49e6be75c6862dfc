#pragma once

#include <span>
#include <vector>

namespace deepshore {

struct Summary {
    double median;
    double mean;
};

/// Median (midpoint of the two central values for even n) and mean.
Summary summarize_report(std::span<const double> values);

struct SignedRankResult {
    double statistic;  // W+, sum of ranks of positive differences
    double p;          // two-sided
    std::size_t n;     // non-zero differences used
    bool exact;
};

enum class SignedRankMethod { Auto, Exact, Normal };

/// Paired two-sided Wilcoxon signed-rank test. Zero differences are dropped
/// and tied magnitudes get average ranks. Auto picks exact for n ≤ 25.
SignedRankResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                      SignedRankMethod method = SignedRankMethod::Auto);

/// p_i' = min(1, n·p_i).
std::vector<double> bonferroni(std::span<const double> p_values);

}  // namespace deepshore
