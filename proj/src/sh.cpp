#include "deepshore/sh.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "deepshore/error.hpp"

namespace deepshore {

namespace {

void require_even_degree(int max_degree) {
    if (max_degree < 0 || max_degree % 2 != 0) throw InvalidArgument("harmonic degree must be even and non-negative");
}

}  // namespace

std::size_t sh_coeff_count(int max_degree) {
    require_even_degree(max_degree);
    return static_cast<std::size_t>((max_degree + 1) * (max_degree + 2) / 2);
}

std::size_t sh_index(int l, int m) { return static_cast<std::size_t>(l * (l - 1) / 2 + l + m); }

Eigen::VectorXi sh_degrees(int max_degree) {
    Eigen::VectorXi deg(static_cast<Eigen::Index>(sh_coeff_count(max_degree)));
    for (int l = 0; l <= max_degree; l += 2)
        for (int m = -l; m <= l; ++m) deg[static_cast<Eigen::Index>(sh_index(l, m))] = l;
    return deg;
}

ShSeries::ShSeries(int max_degree, Eigen::VectorXd coeffs) : max_degree_(max_degree), coeffs_(std::move(coeffs)) {
    if (static_cast<std::size_t>(coeffs_.size()) != sh_coeff_count(max_degree))
        throw InvalidArgument("harmonic coefficient count does not match degree");
}

ShSeries ShSeries::zero(int max_degree) {
    return ShSeries(max_degree, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sh_coeff_count(max_degree))));
}

void eval_sh_row(const Vec3& dir, int max_degree, std::span<double> out) {
    const std::size_t count = sh_coeff_count(max_degree);
    if (out.size() != count) throw InvalidArgument("output span has wrong size for harmonic row");
    const double z = std::clamp(dir.z(), -1.0, 1.0);
    const double phi = std::atan2(dir.y(), dir.x());
    const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    const int L = max_degree;

    // Associated Legendre P_l^m(z), no Condon-Shortley phase, all l ≤ L.
    std::vector<double> p(static_cast<std::size_t>((L + 1) * (L + 1)), 0.0);
    auto P = [&](int l, int m) -> double& { return p[static_cast<std::size_t>(l * (L + 1) + m)]; };
    P(0, 0) = 1.0;
    for (int m = 1; m <= L; ++m) P(m, m) = P(m - 1, m - 1) * (2.0 * m - 1.0) * s;
    for (int m = 0; m < L; ++m) P(m + 1, m) = z * (2.0 * m + 1.0) * P(m, m);
    for (int m = 0; m <= L; ++m)
        for (int l = m + 2; l <= L; ++l)
            P(l, m) = ((2.0 * l - 1.0) * z * P(l - 1, m) - (l + m - 1.0) * P(l - 2, m)) / (l - m);

    for (int l = 0; l <= L; l += 2) {
        const double base = (2.0 * l + 1.0) / (4.0 * std::numbers::pi);
        out[sh_index(l, 0)] = std::sqrt(base) * P(l, 0);
        double ratio = 1.0;  // (l-m)!/(l+m)!
        for (int m = 1; m <= l; ++m) {
            ratio /= static_cast<double>((l + m) * (l - m + 1));
            const double k = std::numbers::sqrt2 * std::sqrt(base * ratio) * P(l, m);
            out[sh_index(l, m)] = k * std::cos(m * phi);
            out[sh_index(l, -m)] = k * std::sin(m * phi);
        }
    }
}

Eigen::MatrixXd eval_sh_basis(const DirectionSet& dirs, int max_degree) {
    const auto count = static_cast<Eigen::Index>(sh_coeff_count(max_degree));
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows(
        static_cast<Eigen::Index>(dirs.size()), count);
    for (std::size_t i = 0; i < dirs.size(); ++i)
        eval_sh_row(dirs[i], max_degree, std::span<double>(rows.row(static_cast<Eigen::Index>(i)).data(), rows.cols()));
    return rows;
}

ShFitter::ShFitter(const DirectionSet& dirs, int max_degree, double ridge)
    : max_degree_(max_degree), basis_(eval_sh_basis(dirs, max_degree)) {
    if (ridge < 0.0 || !std::isfinite(ridge)) throw InvalidArgument("ridge must be a finite non-negative number");
    const Eigen::VectorXd lap = sh_degrees(max_degree).cast<double>().unaryExpr([](double l) { return l * (l + 1.0); });
    Eigen::MatrixXd normal = basis_.transpose() * basis_;
    normal.diagonal() += ridge * lap.cwiseAbs2();
    if (ridge == 0.0) {
        if (basis_.rows() < basis_.cols()) throw SingularSystem("underdetermined harmonic fit without regularization");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(normal, Eigen::EigenvaluesOnly);
        const double lo = eig.eigenvalues().minCoeff();
        const double hi = eig.eigenvalues().maxCoeff();
        if (!(lo > 0.0) || hi / lo > 1e12) throw SingularSystem("harmonic normal equations are singular");
    }
    projector_ = normal.ldlt().solve(basis_.transpose());
}

ShSeries ShFitter::fit(std::span<const double> values) const {
    if (values.size() != sample_count()) throw InvalidArgument("value count does not match direction count");
    const Eigen::Map<const Eigen::VectorXd> v(values.data(), static_cast<Eigen::Index>(values.size()));
    return ShSeries(max_degree_, projector_ * v);
}

Eigen::MatrixXd ShFitter::fit_rows(const Eigen::MatrixXd& values) const {
    if (static_cast<std::size_t>(values.cols()) != sample_count())
        throw InvalidArgument("value count does not match direction count");
    return values * projector_.transpose();
}

ShSeries fit_sh(std::span<const double> values, const DirectionSet& dirs, int max_degree, double ridge) {
    if (values.size() != dirs.size()) throw InvalidArgument("value count does not match direction count");
    return ShFitter(dirs, max_degree, ridge).fit(values);
}

Eigen::VectorXd sample_sh(const ShSeries& series, const DirectionSet& dirs) {
    return eval_sh_basis(dirs, series.max_degree()) * series.coeffs();
}

double acc(std::span<const double> u, std::span<const double> v, int max_degree) {
    const std::size_t count = sh_coeff_count(max_degree);
    if (u.size() != count || v.size() != count) throw InvalidArgument("series sizes do not match degree");
    // Index 0 is the degree-0 term; every other index has l ≥ 2.
    double uv = 0.0, uu = 0.0, vv = 0.0;
    for (std::size_t i = 1; i < count; ++i) {
        uv += u[i] * v[i];
        uu += u[i] * u[i];
        vv += v[i] * v[i];
    }
    if (uu == 0.0 || vv == 0.0) throw UndefinedCorrelation("series has no anisotropic (degree >= 2) energy");
    return std::clamp(uv / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

double acc(const ShSeries& u, const ShSeries& v) {
    if (u.max_degree() != v.max_degree()) throw InvalidArgument("series degrees differ");
    return acc(std::span<const double>(u.coeffs().data(), static_cast<std::size_t>(u.coeffs().size())),
               std::span<const double>(v.coeffs().data(), static_cast<std::size_t>(v.coeffs().size())), u.max_degree());
}

ShSeries rotate_sh(const ShSeries& series, const Rotation& r, const DirectionSet& resample_dirs) {
    if (resample_dirs.size() < sh_coeff_count(series.max_degree()))
        throw InvalidArgument("too few resampling directions for rotation");
    const Eigen::VectorXd values = sample_sh(series, rotate_directions(resample_dirs, r.inverse()));
    return ShFitter(resample_dirs, series.max_degree()).fit(std::span<const double>(values.data(), values.size()));
}

}  // namespace deepshore
