#pragma once

#include <span>

#include <Eigen/Core>

#include "deepshore/sphere.hpp"

namespace deepshore {

/// Number of real even-degree harmonics up to degree L: (L+1)(L+2)/2.
std::size_t sh_coeff_count(int max_degree);

/// Column of (l, m) in the ordering l ascending, m = -l..l.
std::size_t sh_index(int l, int m);

/// Degree of each coefficient, in basis order.
Eigen::VectorXi sh_degrees(int max_degree);

/// Coefficients of a real, even-degree, orthonormal harmonic expansion.
class ShSeries {
public:
    ShSeries(int max_degree, Eigen::VectorXd coeffs);
    static ShSeries zero(int max_degree);

    int max_degree() const noexcept { return max_degree_; }
    const Eigen::VectorXd& coeffs() const noexcept { return coeffs_; }

private:
    int max_degree_;
    Eigen::VectorXd coeffs_;
};

/// Real orthonormal harmonics at one direction. out.size() must be sh_coeff_count(L).
///
/// Convention: m = 0 is the zonal harmonic, m > 0 is √2 times the real part and
/// m < 0 is √2 times the imaginary part of the complex harmonic of order |m|.
void eval_sh_row(const Vec3& dir, int max_degree, std::span<double> out);

/// Rows = directions, columns = basis functions.
Eigen::MatrixXd eval_sh_basis(const DirectionSet& dirs, int max_degree);

/// Cached ridge-regularized least-squares projector onto the harmonic basis.
///
/// Minimizes ‖Bc − v‖² + ridge·‖Λc‖² with Λ = diag(l(l+1)). With ridge = 0 the
/// normal matrix must be well-conditioned (κ ≤ 1e12) or SingularSystem is thrown.
class ShFitter {
public:
    ShFitter(const DirectionSet& dirs, int max_degree, double ridge = 0.0);

    ShSeries fit(std::span<const double> values) const;
    /// Rows of `values` are independent sphere functions sampled on dirs.
    Eigen::MatrixXd fit_rows(const Eigen::MatrixXd& values) const;

    const Eigen::MatrixXd& basis() const noexcept { return basis_; }
    int max_degree() const noexcept { return max_degree_; }
    std::size_t sample_count() const noexcept { return static_cast<std::size_t>(basis_.rows()); }

private:
    int max_degree_;
    Eigen::MatrixXd basis_;
    Eigen::MatrixXd projector_;  // coeffs = projector_ * values
};

ShSeries fit_sh(std::span<const double> values, const DirectionSet& dirs, int max_degree, double ridge = 0.0);

Eigen::VectorXd sample_sh(const ShSeries& series, const DirectionSet& dirs);

/// Angular correlation over degrees ≥ 2; throws UndefinedCorrelation when either
/// series has no energy there.
double acc(const ShSeries& u, const ShSeries& v);
double acc(std::span<const double> u, std::span<const double> v, int max_degree);

/// Rotation by resampling: evaluates the series on R⁻¹·dirs and refits on dirs.
ShSeries rotate_sh(const ShSeries& series, const Rotation& r, const DirectionSet& resample_dirs);

}  // namespace deepshore
