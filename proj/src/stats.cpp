#include "deepshore/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "deepshore/error.hpp"

namespace deepshore {

Summary summarize_report(std::span<const double> values) {
    if (values.empty()) throw InvalidArgument("cannot summarize an empty array");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    const double median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
    return {median, mean};
}

namespace {

// Average ranks of |d|, 1-based.
std::vector<double> average_ranks(const std::vector<double>& magnitudes) {
    const std::size_t n = magnitudes.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return magnitudes[a] < magnitudes[b]; });
    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && magnitudes[order[j + 1]] == magnitudes[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

// Exact null distribution of W+ over doubled ranks (integers even with ties).
double exact_p(const std::vector<double>& ranks, double w_plus) {
    std::vector<long> doubled;
    long total = 0;
    for (double r : ranks) {
        doubled.push_back(std::lround(2.0 * r));
        total += doubled.back();
    }
    std::vector<double> count(static_cast<std::size_t>(total) + 1, 0.0);
    count[0] = 1.0;
    long reach = 0;
    for (long r : doubled) {
        for (long s = reach; s >= 0; --s)
            if (count[static_cast<std::size_t>(s)] != 0.0) count[static_cast<std::size_t>(s + r)] += count[static_cast<std::size_t>(s)];
        reach += r;
    }
    const double all = std::ldexp(1.0, static_cast<int>(ranks.size()));
    const long w = std::lround(2.0 * w_plus);
    double lower = 0.0;
    double upper = 0.0;
    for (long s = 0; s <= total; ++s) {
        if (s <= w) lower += count[static_cast<std::size_t>(s)];
        if (s >= w) upper += count[static_cast<std::size_t>(s)];
    }
    return std::min(1.0, 2.0 * std::min(lower, upper) / all);
}

double normal_p(const std::vector<double>& ranks, double w_plus) {
    const auto n = static_cast<double>(ranks.size());
    const double mean = n * (n + 1.0) / 4.0;
    double variance = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0;
    // Tie correction: subtract Σ(t³ − t)/48 over tie groups.
    std::vector<double> sorted = ranks;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
        const auto t = static_cast<double>(j - i + 1);
        variance -= (t * t * t - t) / 48.0;
        i = j + 1;
    }
    if (variance <= 0.0) return 1.0;
    // Continuity correction toward the mean.
    const double diff = std::abs(w_plus - mean);
    const double z = std::max(0.0, diff - 0.5) / std::sqrt(variance);
    return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

}  // namespace

SignedRankResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b, SignedRankMethod method) {
    if (a.size() != b.size()) throw InvalidArgument("paired samples must have equal length");
    std::vector<double> diffs;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        if (d != 0.0) diffs.push_back(d);
    }
    if (diffs.empty()) return {0.0, 1.0, 0, true};
    if (diffs.size() < 5) throw InvalidArgument("signed-rank test needs at least 5 non-zero differences");

    std::vector<double> magnitudes(diffs.size());
    std::transform(diffs.begin(), diffs.end(), magnitudes.begin(), [](double d) { return std::abs(d); });
    const auto ranks = average_ranks(magnitudes);
    double w_plus = 0.0;
    for (std::size_t i = 0; i < diffs.size(); ++i)
        if (diffs[i] > 0.0) w_plus += ranks[i];

    const bool exact = method == SignedRankMethod::Exact || (method == SignedRankMethod::Auto && diffs.size() <= 25);
    if (exact && diffs.size() > 60) throw InvalidArgument("exact signed-rank test limited to 60 differences");
    const double p = exact ? exact_p(ranks, w_plus) : normal_p(ranks, w_plus);
    return {w_plus, p, diffs.size(), exact};
}

std::vector<double> bonferroni(std::span<const double> p_values) {
    std::vector<double> out(p_values.size());
    const auto n = static_cast<double>(p_values.size());
    std::transform(p_values.begin(), p_values.end(), out.begin(), [n](double p) { return std::min(1.0, p * n); });
    return out;
}

}  // namespace deepshore
