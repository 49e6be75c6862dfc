#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "deepshore/sh.hpp"
#include "deepshore/sphere.hpp"

namespace deepshore {

/// Acquisition scheme: one (b-value, direction) pair per sample, with q = √b.
class QSpaceSamples {
public:
    QSpaceSamples(std::vector<double> bvalues, DirectionSet directions);

    /// Every direction of `dirs` at each b-value in `shells`, shell-major.
    static QSpaceSamples shells(std::span<const double> shells, const DirectionSet& dirs);
    /// Shell i uses per_shell[i].
    static QSpaceSamples shells(std::span<const double> shells, std::span<const DirectionSet> per_shell);

    std::size_t size() const noexcept { return bvalues_.size(); }
    const std::vector<double>& bvalues() const noexcept { return bvalues_; }
    const std::vector<double>& q() const noexcept { return q_; }
    const DirectionSet& directions() const noexcept { return dirs_; }

    /// Indices of samples whose b-value is within `tol` of any entry of `keep`.
    std::vector<std::size_t> select_shells(std::span<const double> keep, double tol = 1.0) const;
    QSpaceSamples subset(std::span<const std::size_t> indices) const;
    /// Distinct b-values in ascending order (merged within `tol`).
    std::vector<double> distinct_shells(double tol = 1.0) const;

private:
    std::vector<double> bvalues_;
    DirectionSet dirs_;
    std::vector<double> q_;
};

/// FSL bval/bvec loading and writing.
QSpaceSamples read_fsl_scheme(std::istream& bval, std::istream& bvec);
void write_bval(std::ostream& out, const std::vector<double>& bvalues);

struct ShoreIndex {
    int n;
    int l;
    int m;
};

/// Index set {(n,l,m): n even ≤ N, l even ≤ n, |m| ≤ l}, n-major, then l, then m.
std::vector<ShoreIndex> shore_indices(int radial_order);

/// (N+2)(N+4)(2N+3)/24, counted by enumerating the index set.
std::size_t shore_coeff_count(int radial_order);

struct ShoreFitConfig {
    int radial_order = 6;
    double lambda_n = 1e-8;
    double lambda_l = 1e-8;
};

class ShoreSeries {
public:
    ShoreSeries(int radial_order, double zeta, Eigen::VectorXd coeffs);

    int radial_order() const noexcept { return radial_order_; }
    double zeta() const noexcept { return zeta_; }
    const Eigen::VectorXd& coeffs() const noexcept { return coeffs_; }

private:
    int radial_order_;
    double zeta_;
    Eigen::VectorXd coeffs_;
};

/// Associated Laguerre polynomial L_k^(alpha)(x) by the three-term recurrence.
double laguerre(int k, double alpha, double x);

/// Normalization making the radial family orthonormal under ∫ G G q² dq.
double shore_kappa(int n, int l, double zeta);

/// Radial function G_nl(q, ζ) with Laguerre degree (n-l)/2 and order l+1/2.
double radial_basis_g(int n, int l, double q, double zeta);

/// Rows = samples, columns = shore_indices(N); entry G_nl(q)·Y_lm(u).
Eigen::MatrixXd shore_design_matrix(const QSpaceSamples& samples, int radial_order, double zeta);

/// Cached regularized least-squares solver for one (scheme, config, ζ).
///
/// Minimizes ‖Mc − s‖² + λ_N‖diag(n(n+1))c‖² + λ_L‖diag(l(l+1))c‖².
class ShoreFitter {
public:
    ShoreFitter(const QSpaceSamples& samples, const ShoreFitConfig& cfg, double zeta);

    ShoreSeries fit(std::span<const double> signal) const;
    /// Rows of `signals` are voxels; returns one coefficient row per voxel.
    Eigen::MatrixXd fit_rows(const Eigen::MatrixXd& signals) const;
    /// Mean squared residual over all voxels and samples after refitting.
    double mean_squared_residual(const Eigen::MatrixXd& signals) const;

    const Eigen::MatrixXd& design() const noexcept { return design_; }
    double zeta() const noexcept { return zeta_; }
    int radial_order() const noexcept { return radial_order_; }

private:
    int radial_order_;
    double zeta_;
    Eigen::MatrixXd design_;
    Eigen::MatrixXd projector_;
};

ShoreSeries fit_shore(std::span<const double> signal, const QSpaceSamples& samples, const ShoreFitConfig& cfg,
                      double zeta);

Eigen::VectorXd reconstruct_signal(const ShoreSeries& series, const QSpaceSamples& samples);

struct ZetaOptimizerConfig {
    double gradient_step = 1e-4;     // central difference step in log ζ
    double tolerance = 1e-6;         // on |Δ log ζ|
    int max_iterations = 100;
    double max_log_excursion = 0.0;  // optional bound on |log ζ − log ζ₀|; 0 disables
};

struct ZetaResult {
    double zeta;
    double objective;
    double initial_objective;
    int iterations;
    std::vector<double> zeta_history;  // accepted iterates, starting at ζ₀
};

/// Quasi-Newton (BFGS) minimization over log ζ of the mean squared residual of
/// per-voxel refits. Never returns an objective above the starting one.
ZetaResult optimize_zeta(const Eigen::MatrixXd& signals, const QSpaceSamples& samples, const ShoreFitConfig& cfg,
                         double zeta0, const ZetaOptimizerConfig& opt = {});

ZetaResult optimize_zeta(const std::vector<std::vector<double>>& signals, const QSpaceSamples& samples,
                         const ShoreFitConfig& cfg, double zeta0, const ZetaOptimizerConfig& opt = {});

/// Default starting scale: median(b) / 8.
double default_zeta0(const QSpaceSamples& samples);

inline constexpr double kFodShellB = 2000.0;

/// Fits sphere values (all assigned b-value `b`) to SHORE.
ShoreSeries sphere_values_to_shore(std::span<const double> values, const DirectionSet& dirs, double zeta,
                                   const ShoreFitConfig& cfg, double b = kFodShellB);

/// Samples the FOD on `dirs`, places every sample on the b = 2000 shell, fits SHORE.
ShoreSeries sh_fod_to_shore(const ShSeries& fod, const DirectionSet& dirs, double zeta, const ShoreFitConfig& cfg,
                            double b = kFodShellB);

/// Values of the SHORE series on the sphere of radius q = √b.
Eigen::VectorXd sample_shore_sphere(const ShoreSeries& series, const DirectionSet& dirs, double b);

/// Evaluates the series on the q = √b sphere at dirs, then fits SH of degree L.
ShSeries shore_to_sh(const ShoreSeries& series, const DirectionSet& dirs, double b, int max_degree);

}  // namespace deepshore
