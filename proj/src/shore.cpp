#include "deepshore/shore.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "deepshore/error.hpp"

namespace deepshore {

namespace {

void require_even_order(int radial_order) {
    if (radial_order < 0 || radial_order % 2 != 0) throw InvalidArgument("radial order must be even and non-negative");
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

// --- acquisition scheme -----------------------------------------------------

QSpaceSamples::QSpaceSamples(std::vector<double> bvalues, DirectionSet directions)
    : bvalues_(std::move(bvalues)), dirs_(std::move(directions)) {
    if (bvalues_.size() != dirs_.size()) throw InvalidArgument("b-value and direction counts differ");
    q_.reserve(bvalues_.size());
    for (double b : bvalues_) {
        if (!(b >= 0.0) || !std::isfinite(b)) throw InvalidArgument("b-values must be finite and non-negative");
        q_.push_back(std::sqrt(b));
    }
}

QSpaceSamples QSpaceSamples::shells(std::span<const double> shells, const DirectionSet& dirs) {
    std::vector<DirectionSet> per(shells.size(), dirs);
    return QSpaceSamples::shells(shells, per);
}

QSpaceSamples QSpaceSamples::shells(std::span<const double> shells, std::span<const DirectionSet> per_shell) {
    if (shells.empty()) throw InvalidArgument("at least one shell is required");
    if (shells.size() != per_shell.size()) throw InvalidArgument("one direction set per shell is required");
    std::vector<double> b;
    std::vector<Vec3> d;
    for (std::size_t s = 0; s < shells.size(); ++s) {
        for (const auto& v : per_shell[s]) {
            b.push_back(shells[s]);
            d.push_back(v);
        }
    }
    return QSpaceSamples(std::move(b), DirectionSet(std::move(d)));
}

std::vector<std::size_t> QSpaceSamples::select_shells(std::span<const double> keep, double tol) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < bvalues_.size(); ++i) {
        for (double k : keep) {
            if (std::abs(bvalues_[i] - k) <= tol) {
                idx.push_back(i);
                break;
            }
        }
    }
    return idx;
}

QSpaceSamples QSpaceSamples::subset(std::span<const std::size_t> indices) const {
    if (indices.empty()) throw InvalidArgument("sample subset is empty");
    std::vector<double> b;
    std::vector<Vec3> d;
    for (std::size_t i : indices) {
        if (i >= size()) throw InvalidArgument("sample index out of range");
        b.push_back(bvalues_[i]);
        d.push_back(dirs_[i]);
    }
    return QSpaceSamples(std::move(b), DirectionSet(std::move(d)));
}

std::vector<double> QSpaceSamples::distinct_shells(double tol) const {
    std::vector<double> sorted = bvalues_;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> out;
    for (double b : sorted)
        if (out.empty() || b - out.back() > tol) out.push_back(b);
    return out;
}

QSpaceSamples read_fsl_scheme(std::istream& bval, std::istream& bvec) {
    std::vector<double> b;
    std::string token;
    while (bval >> token) {
        try {
            b.push_back(std::stod(token));
        } catch (const std::exception&) {
            throw FormatError("bval file holds a non-numeric entry: " + token);
        }
    }
    DirectionSet dirs = read_bvec(bvec);
    if (b.size() != dirs.size()) throw FormatError("bval and bvec lengths differ");
    return QSpaceSamples(std::move(b), std::move(dirs));
}

void write_bval(std::ostream& out, const std::vector<double>& bvalues) {
    out << std::setprecision(17);
    for (std::size_t i = 0; i < bvalues.size(); ++i) out << (i ? " " : "") << bvalues[i];
    out << '\n';
}

// --- basis ------------------------------------------------------------------

std::vector<ShoreIndex> shore_indices(int radial_order) {
    require_even_order(radial_order);
    std::vector<ShoreIndex> idx;
    for (int n = 0; n <= radial_order; n += 2)
        for (int l = 0; l <= n; l += 2)
            for (int m = -l; m <= l; ++m) idx.push_back({n, l, m});
    return idx;
}

std::size_t shore_coeff_count(int radial_order) { return shore_indices(radial_order).size(); }

ShoreSeries::ShoreSeries(int radial_order, double zeta, Eigen::VectorXd coeffs)
    : radial_order_(radial_order), zeta_(zeta), coeffs_(std::move(coeffs)) {
    if (!(zeta_ > 0.0) || !std::isfinite(zeta_)) throw InvalidArgument("zeta must be positive");
    if (static_cast<std::size_t>(coeffs_.size()) != shore_coeff_count(radial_order))
        throw InvalidArgument("SHORE coefficient count does not match radial order");
}

double laguerre(int k, double alpha, double x) {
    if (k < 0) throw InvalidArgument("Laguerre degree must be non-negative");
    if (k == 0) return 1.0;
    double prev = 1.0;
    double cur = 1.0 + alpha - x;
    for (int j = 1; j < k; ++j) {
        const double next = ((2.0 * j + 1.0 + alpha - x) * cur - (j + alpha) * prev) / (j + 1.0);
        prev = cur;
        cur = next;
    }
    return cur;
}

double shore_kappa(int n, int l, double zeta) {
    const int k = (n - l) / 2;
    const double log_k_fact = std::lgamma(k + 1.0);
    const double log_gamma = std::lgamma(k + l + 1.5);
    return std::sqrt(2.0 * std::exp(log_k_fact - log_gamma) / std::pow(zeta, 1.5));
}

double radial_basis_g(int n, int l, double q, double zeta) {
    if (n < 0 || l < 0 || n % 2 || l % 2 || l > n) throw InvalidArgument("invalid SHORE radial index");
    if (!(zeta > 0.0) || !std::isfinite(zeta)) throw InvalidArgument("zeta must be positive");
    if (q < 0.0) throw InvalidArgument("q must be non-negative");
    const double x = q * q / zeta;
    const double power = l == 0 ? 1.0 : std::pow(x, 0.5 * l);
    return shore_kappa(n, l, zeta) * power * std::exp(-0.5 * x) * laguerre((n - l) / 2, l + 0.5, x);
}

Eigen::MatrixXd shore_design_matrix(const QSpaceSamples& samples, int radial_order, double zeta) {
    const auto idx = shore_indices(radial_order);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(idx.size()));
    std::vector<double> sh(sh_coeff_count(radial_order));
    for (std::size_t i = 0; i < samples.size(); ++i) {
        eval_sh_row(samples.directions()[i], radial_order, sh);
        const double q = samples.q()[i];
        for (std::size_t c = 0; c < idx.size(); ++c) {
            const auto [n, l, mm] = idx[c];
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
                radial_basis_g(n, l, q, zeta) * sh[sh_index(l, mm)];
        }
    }
    return m;
}

// --- fitting ----------------------------------------------------------------

ShoreFitter::ShoreFitter(const QSpaceSamples& samples, const ShoreFitConfig& cfg, double zeta)
    : radial_order_(cfg.radial_order), zeta_(zeta), design_(shore_design_matrix(samples, cfg.radial_order, zeta)) {
    if (cfg.lambda_n < 0.0 || cfg.lambda_l < 0.0) throw InvalidArgument("regularization weights must be non-negative");
    const auto idx = shore_indices(cfg.radial_order);
    Eigen::MatrixXd normal = design_.transpose() * design_;
    for (std::size_t c = 0; c < idx.size(); ++c) {
        const double nn = idx[c].n * (idx[c].n + 1.0);
        const double ll = idx[c].l * (idx[c].l + 1.0);
        normal(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c)) +=
            cfg.lambda_n * nn * nn + cfg.lambda_l * ll * ll;
    }
    if (cfg.lambda_n == 0.0 && cfg.lambda_l == 0.0) {
        if (design_.rows() < design_.cols()) throw SingularSystem("underdetermined SHORE fit without regularization");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(normal, Eigen::EigenvaluesOnly);
        const double lo = eig.eigenvalues().minCoeff();
        const double hi = eig.eigenvalues().maxCoeff();
        if (!(lo > 0.0) || hi / lo > 1e12) throw SingularSystem("SHORE normal equations are singular");
    }
    projector_ = normal.ldlt().solve(design_.transpose());
}

ShoreSeries ShoreFitter::fit(std::span<const double> signal) const {
    if (signal.size() != static_cast<std::size_t>(design_.rows()))
        throw InvalidArgument("signal length does not match sample count");
    const Eigen::Map<const Eigen::VectorXd> s(signal.data(), static_cast<Eigen::Index>(signal.size()));
    return ShoreSeries(radial_order_, zeta_, projector_ * s);
}

Eigen::MatrixXd ShoreFitter::fit_rows(const Eigen::MatrixXd& signals) const {
    if (signals.cols() != design_.rows()) throw InvalidArgument("signal length does not match sample count");
    return signals * projector_.transpose();
}

double ShoreFitter::mean_squared_residual(const Eigen::MatrixXd& signals) const {
    if (signals.cols() != design_.rows()) throw InvalidArgument("signal length does not match sample count");
    const Eigen::MatrixXd hat = design_ * projector_;  // samples × samples
    const Eigen::MatrixXd residual = signals - signals * hat.transpose();
    // Per-voxel sums in a fixed order keep the objective reproducible.
    double total = 0.0;
    double compensation = 0.0;
    for (Eigen::Index r = 0; r < residual.rows(); ++r) {
        const double y = residual.row(r).squaredNorm() - compensation;
        const double t = total + y;
        compensation = (t - total) - y;
        total = t;
    }
    return total / static_cast<double>(residual.size());
}

ShoreSeries fit_shore(std::span<const double> signal, const QSpaceSamples& samples, const ShoreFitConfig& cfg,
                      double zeta) {
    if (signal.size() != samples.size()) throw InvalidArgument("signal length does not match sample count");
    return ShoreFitter(samples, cfg, zeta).fit(signal);
}

Eigen::VectorXd reconstruct_signal(const ShoreSeries& series, const QSpaceSamples& samples) {
    return shore_design_matrix(samples, series.radial_order(), series.zeta()) * series.coeffs();
}

// --- scale optimization -----------------------------------------------------

ZetaResult optimize_zeta(const Eigen::MatrixXd& signals, const QSpaceSamples& samples, const ShoreFitConfig& cfg,
                         double zeta0, const ZetaOptimizerConfig& opt) {
    if (signals.rows() == 0) throw InvalidArgument("no signals supplied for zeta optimization");
    if (!(zeta0 > 0.0) || !std::isfinite(zeta0)) throw InvalidArgument("zeta0 must be positive");
    if (signals.cols() != static_cast<Eigen::Index>(samples.size()))
        throw InvalidArgument("signal length does not match sample count");

    const double x0 = std::log(zeta0);
    double last_valid = zeta0;
    auto objective = [&](double x) {
        if (opt.max_log_excursion > 0.0) x = std::clamp(x, x0 - opt.max_log_excursion, x0 + opt.max_log_excursion);
        double f = std::numeric_limits<double>::quiet_NaN();
        try {
            f = ShoreFitter(samples, cfg, std::exp(x)).mean_squared_residual(signals);
        } catch (const SingularSystem&) {
        }
        if (!std::isfinite(f))
            throw OptimizationFailure("non-finite zeta objective at zeta=" + std::to_string(std::exp(x)), last_valid);
        return f;
    };
    auto clamp_x = [&](double x) {
        return opt.max_log_excursion > 0.0 ? std::clamp(x, x0 - opt.max_log_excursion, x0 + opt.max_log_excursion) : x;
    };

    const double h = opt.gradient_step;
    double x = x0;
    double f = objective(x);
    ZetaResult result{zeta0, f, f, 0, {zeta0}};

    double inv_hessian = 0.0;  // 0 until the first curvature estimate
    double g = 0.0;
    {
        const double fp = objective(x + h);
        const double fm = objective(x - h);
        g = (fp - fm) / (2.0 * h);
        const double curvature = (fp - 2.0 * f + fm) / (h * h);
        if (curvature > 0.0) inv_hessian = 1.0 / curvature;
    }

    for (int it = 0; it < opt.max_iterations; ++it) {
        result.iterations = it + 1;
        if (g == 0.0) break;
        double step = inv_hessian > 0.0 ? -inv_hessian * g : -g / std::abs(g);
        step = std::clamp(step, -1.0, 1.0);  // at most a factor e per iteration

        double alpha = 1.0;
        bool accepted = false;
        double x_new = x;
        double f_new = f;
        for (int ls = 0; ls < 40; ++ls) {
            x_new = clamp_x(x + alpha * step);
            f_new = objective(x_new);
            if (f_new <= f + 1e-4 * alpha * step * g && f_new <= f) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted || x_new == x) break;

        const double s = x_new - x;
        const double fp = objective(x_new + h);
        const double fm = objective(x_new - h);
        const double g_new = (fp - fm) / (2.0 * h);
        const double y = g_new - g;
        // One-dimensional BFGS update of the inverse Hessian.
        if (s * y > 0.0) inv_hessian = s / y;

        x = x_new;
        f = f_new;
        g = g_new;
        last_valid = std::exp(x);
        result.zeta_history.push_back(last_valid);
        if (std::abs(s) < opt.tolerance) break;
    }
    result.zeta = std::exp(x);
    result.objective = f;
    return result;
}

ZetaResult optimize_zeta(const std::vector<std::vector<double>>& signals, const QSpaceSamples& samples,
                         const ShoreFitConfig& cfg, double zeta0, const ZetaOptimizerConfig& opt) {
    if (signals.empty()) throw InvalidArgument("no signals supplied for zeta optimization");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(signals.size()), static_cast<Eigen::Index>(samples.size()));
    for (std::size_t r = 0; r < signals.size(); ++r) {
        if (signals[r].size() != samples.size()) throw InvalidArgument("signal length does not match sample count");
        for (std::size_t c = 0; c < samples.size(); ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = signals[r][c];
    }
    return optimize_zeta(m, samples, cfg, zeta0, opt);
}

double default_zeta0(const QSpaceSamples& samples) { return median(samples.bvalues()) / 8.0; }

// --- FOD conversions --------------------------------------------------------

ShoreSeries sphere_values_to_shore(std::span<const double> values, const DirectionSet& dirs, double zeta,
                                   const ShoreFitConfig& cfg, double b) {
    if (values.size() != dirs.size()) throw InvalidArgument("value count does not match direction count");
    const QSpaceSamples shell(std::vector<double>(dirs.size(), b), dirs);
    return fit_shore(values, shell, cfg, zeta);
}

ShoreSeries sh_fod_to_shore(const ShSeries& fod, const DirectionSet& dirs, double zeta, const ShoreFitConfig& cfg,
                            double b) {
    const Eigen::VectorXd values = sample_sh(fod, dirs);
    return sphere_values_to_shore(std::span<const double>(values.data(), static_cast<std::size_t>(values.size())),
                                  dirs, zeta, cfg, b);
}

Eigen::VectorXd sample_shore_sphere(const ShoreSeries& series, const DirectionSet& dirs, double b) {
    return reconstruct_signal(series, QSpaceSamples(std::vector<double>(dirs.size(), b), dirs));
}

ShSeries shore_to_sh(const ShoreSeries& series, const DirectionSet& dirs, double b, int max_degree) {
    if (!(b > 0.0)) throw InvalidArgument("b must be positive");
    if (dirs.size() < sh_coeff_count(max_degree)) throw SingularSystem("too few directions for harmonic fit");
    const Eigen::VectorXd values = sample_shore_sphere(series, dirs, b);
    return fit_sh(std::span<const double>(values.data(), static_cast<std::size_t>(values.size())), dirs, max_degree);
}

}  // namespace deepshore
