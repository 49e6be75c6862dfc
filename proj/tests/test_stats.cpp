#include <doctest.h>

#include <algorithm>
#include <random>

#include "deepshore/error.hpp"
#include "deepshore/stats.hpp"
#include "oracles.hpp"

using namespace deepshore;

namespace {

std::vector<double> shifted_pairs(std::size_t n, double shift, std::uint64_t seed, std::vector<double>& b) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<double> a(n);
    b.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        b[i] = d(rng);
        a[i] = b[i] + shift + d(rng);
    }
    return a;
}

}  // namespace

TEST_CASE("summaries") {
    const std::vector<double> odd{3.0, 1.0, 2.0};
    CHECK(summarize_report(odd).median == 2.0);
    CHECK(summarize_report(odd).mean == 2.0);
    const std::vector<double> even{4.0, 1.0, 3.0, 2.0};
    CHECK(summarize_report(even).median == 2.5);
    CHECK(summarize_report(even).mean == 2.5);
    CHECK_THROWS_AS(summarize_report(std::vector<double>{}), InvalidArgument);
}

TEST_CASE("Bonferroni") {
    const std::vector<double> p{0.01, 0.02};
    CHECK(bonferroni(p) == std::vector<double>{0.02, 0.04});
    const std::vector<double> big{0.6, 0.9};
    CHECK(bonferroni(big) == std::vector<double>{1.0, 1.0});
    const std::vector<double> one{0.3};
    CHECK(bonferroni(one) == std::vector<double>{0.3});
}

TEST_CASE("signed-rank test conventions") {
    const std::vector<double> a{1, 2, 3, 4, 5, 6};
    CHECK(wilcoxon_signed_rank(a, a).p == 1.0);
    const std::vector<double> b{0.9, 1.8, 2.7, 3.6, 4.5, 5.4};
    const auto r = wilcoxon_signed_rank(a, b);
    CHECK(r.exact);
    CHECK(r.p == doctest::Approx(2.0 / 64.0).epsilon(1e-14));
    CHECK(r.statistic == 21.0);
    const std::vector<double> shorter{1, 2, 3};
    CHECK_THROWS_AS(wilcoxon_signed_rank(a, shorter), InvalidArgument);
    const std::vector<double> c{1, 2, 3, 4, 5.5, 6.5};
    CHECK_THROWS_AS(wilcoxon_signed_rank(a, c), InvalidArgument);
}

TEST_CASE("exact p-values match full sign enumeration") {
    for (std::size_t n : {5u, 8u, 12u, 16u, 20u}) {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            std::vector<double> b;
            const auto a = shifted_pairs(n, 0.4, 100 * n + seed, b);
            std::vector<double> d(n);
            for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
            const auto r = wilcoxon_signed_rank(a, b, SignedRankMethod::Exact);
            CHECK(r.p == doctest::Approx(oracle::signed_rank_enumeration(d)).epsilon(1e-12));
        }
    }
    SUBCASE("with tied magnitudes") {
        const std::vector<double> a{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
        const std::vector<double> b{0, 3, 2, 6, 3, 4, 9, 6, 7, 8};
        std::vector<double> d(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
        const auto r = wilcoxon_signed_rank(a, b, SignedRankMethod::Exact);
        CHECK(r.p == doctest::Approx(oracle::signed_rank_enumeration(d)).epsilon(1e-12));
    }
}

TEST_CASE("normal approximation tracks the exact test") {
    // Every attainable W at n = 20 with distinct ranks; relative accuracy is claimed for p >= 0.05.
    double worst = 0.0;
    for (int w = 0; w <= 210; ++w) {
        std::vector<double> a(20);
        const std::vector<double> b(20, 0.0);
        int rest = w;
        for (int r = 20; r >= 1; --r) {
            a[static_cast<std::size_t>(r - 1)] = rest >= r ? r : -r;
            if (rest >= r) rest -= r;
        }
        const auto exact = wilcoxon_signed_rank(a, b, SignedRankMethod::Exact);
        const auto approx = wilcoxon_signed_rank(a, b, SignedRankMethod::Normal);
        REQUIRE(exact.statistic == w);
        CHECK_FALSE(approx.exact);
        if (exact.p >= 0.05) worst = std::max(worst, std::abs(approx.p - exact.p) / exact.p);
    }
    CHECK(worst < 0.05);

    std::vector<double> b;
    const auto a = shifted_pairs(40, 0.2, 9, b);
    CHECK_FALSE(wilcoxon_signed_rank(a, b).exact);
    CHECK(wilcoxon_signed_rank(std::vector<double>(a.begin(), a.begin() + 25), std::vector<double>(b.begin(), b.begin() + 25)).exact);
}
