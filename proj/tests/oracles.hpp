#pragma once

// Reference computations that share no code with the library.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/binomial.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/spherical_harmonic.hpp>

namespace oracle {

/// L_k^{(α)}(x) by its explicit power series.
inline double laguerre_series(int k, double alpha, double x) {
    double sum = 0.0;
    for (int i = 0; i <= k; ++i) {
        const double binom = std::tgamma(k + alpha + 1.0) / (std::tgamma(k - i + 1.0) * std::tgamma(alpha + i + 1.0));
        sum += (i % 2 ? -1.0 : 1.0) * binom * std::pow(x, i) / std::tgamma(i + 1.0);
    }
    return sum;
}

/// Adaptive Gauss–Kronrod integral over [0, ∞).
inline double integrate_half_line(const std::function<double(double)>& f) {
    double err = 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        f, 0.0, std::numeric_limits<double>::infinity(), 15, 1e-11, &err);
}

/// Adaptive integral over [a, b].
inline double integrate(const std::function<double(double)>& f, double a, double b) {
    double err = 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, 1e-11, &err);
}

/// Real even-order harmonic built from the complex one: m > 0 uses √2·Re,
/// m < 0 uses √2·Im of the order-|m| function, with the Condon–Shortley
/// phase removed.
inline double real_sh(int l, int m, double theta, double phi) {
    const int am = std::abs(m);
    const std::complex<double> y = boost::math::spherical_harmonic(static_cast<unsigned>(l), am, theta, phi);
    const double cs = (am % 2) ? -1.0 : 1.0;
    if (m == 0) return y.real();
    if (m > 0) return std::numbers::sqrt2 * cs * y.real();
    return std::numbers::sqrt2 * cs * y.imag();
}

/// Integral over the sphere of f(θ, φ) using a Gauss–Legendre rule in cos θ
/// and the trapezoid rule in φ.
template <int NPolar>
double sphere_integral(const std::function<double(double, double)>& f, int n_azimuth) {
    using rule = boost::math::quadrature::gauss<double, NPolar>;
    const auto& x = rule::abscissa();
    const auto& w = rule::weights();
    double total = 0.0;
    auto add = [&](double z, double wz) {
        const double theta = std::acos(z);
        for (int j = 0; j < n_azimuth; ++j) {
            const double phi = 2.0 * std::numbers::pi * j / n_azimuth;
            total += wz * (2.0 * std::numbers::pi / n_azimuth) * f(theta, phi);
        }
    };
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] == 0.0) {
            add(0.0, w[i]);
        } else {
            add(x[i], w[i]);
            add(-x[i], w[i]);
        }
    }
    return total;
}

/// Two-sided signed-rank p-value by enumerating every sign assignment of
/// |d| (ties receive average ranks). Statistic is the positive-rank sum.
inline double signed_rank_enumeration(const std::vector<double>& diffs) {
    const std::size_t n = diffs.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return std::abs(diffs[a]) < std::abs(diffs[b]); });
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && std::abs(diffs[order[j + 1]]) == std::abs(diffs[order[i]])) ++j;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
        i = j + 1;
    }
    double observed = 0.0, total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        total += rank[i];
        if (diffs[i] > 0) observed += rank[i];
    }
    const double centre = total / 2.0;
    const double dev = std::abs(observed - centre);
    std::uint64_t extreme = 0;
    const std::uint64_t count = std::uint64_t{1} << n;
    for (std::uint64_t mask = 0; mask < count; ++mask) {
        double w = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (mask & (std::uint64_t{1} << i)) w += rank[i];
        if (std::abs(w - centre) >= dev - 1e-9) ++extreme;
    }
    return std::min(1.0, static_cast<double>(extreme) / static_cast<double>(count));
}

}  // namespace oracle
