#include "deepshore/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "deepshore/error.hpp"
#include "deepshore/parallel.hpp"

namespace deepshore {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

void check_fractions(std::span<const TensorCompartment> compartments) {
    if (compartments.empty()) throw InvalidArgument("at least one compartment is required");
    double total = 0.0;
    for (const auto& c : compartments) {
        if (!(c.fraction > 0.0) || c.fraction > 1.0) throw InvalidArgument("compartment fraction must lie in (0, 1]");
        if (!(c.axial > 0.0) || !(c.radial > 0.0)) throw InvalidArgument("compartment eigenvalues must be positive");
        total += c.fraction;
    }
    if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("compartment fractions must sum to 1");
}

Vec3 any_perpendicular(const Vec3& v) {
    const Vec3 helper = std::abs(v.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    return v.cross(helper).normalized();
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

Eigen::VectorXd simulate_signal(std::span<const TensorCompartment> compartments, const QSpaceSamples& samples) {
    check_fractions(compartments);
    Eigen::VectorXd s = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(samples.size()));
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double b = samples.bvalues()[i];
        if (b == 0.0) {
            s[static_cast<Eigen::Index>(i)] = 1.0;
            continue;
        }
        const Vec3& g = samples.directions()[i];
        double value = 0.0;
        for (const auto& c : compartments) {
            const double cosine = g.dot(c.orientation.normalized());
            const double adc = c.radial + (c.axial - c.radial) * cosine * cosine;
            value += c.fraction * std::exp(-b * adc);
        }
        s[static_cast<Eigen::Index>(i)] = value;
    }
    return s;
}

double watson_kernel(const Vec3& mean_axis, double kappa, const Vec3& x) {
    const double t = mean_axis.dot(x);
    // Shifted by κ so the peak is 1 and large κ cannot overflow.
    return std::exp(kappa * (t * t - 1.0));
}

FodProjector::FodProjector(int max_degree, double kappa, SphereQuadrature quad)
    : max_degree_(max_degree), kappa_(kappa), quad_(std::move(quad)) {
    if (!(kappa > 0.0)) throw InvalidArgument("Watson concentration must be positive");
    const Eigen::MatrixXd basis = eval_sh_basis(quad_.nodes, max_degree);  // nodes × coeffs
    const Eigen::Map<const Eigen::VectorXd> w(quad_.weights.data(), static_cast<Eigen::Index>(quad_.weights.size()));
    weighted_basis_ = (basis.array().colwise() * w.array()).matrix().transpose();
}

ShSeries FodProjector::project(std::span<const TensorCompartment> compartments) const {
    check_fractions(compartments);
    const std::size_t nodes = quad_.nodes.size();
    Eigen::VectorXd density = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nodes));
    for (const auto& c : compartments) {
        const Vec3 axis = c.orientation.normalized();
        // Normalize each lobe to unit mass under this quadrature.
        Eigen::VectorXd lobe(static_cast<Eigen::Index>(nodes));
        double mass = 0.0;
        for (std::size_t i = 0; i < nodes; ++i) {
            lobe[static_cast<Eigen::Index>(i)] = watson_kernel(axis, kappa_, quad_.nodes[i]);
            mass += quad_.weights[i] * lobe[static_cast<Eigen::Index>(i)];
        }
        density += (c.fraction / mass) * lobe;
    }
    return ShSeries(max_degree_, weighted_basis_ * density);
}

ShSeries ground_truth_fod(std::span<const TensorCompartment> compartments, int max_degree, double kappa,
                          const SphereQuadrature& quad) {
    return FodProjector(max_degree, kappa, quad).project(compartments);
}

std::vector<double> add_rician_noise(std::span<const double> values, double snr, std::uint64_t seed) {
    if (!(snr > 0.0)) throw InvalidArgument("snr must be positive");
    std::vector<double> out(values.begin(), values.end());
    if (std::isinf(snr)) return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0 / snr);
    for (auto& v : out) {
        const double re = v + normal(rng);
        const double im = normal(rng);
        v = std::sqrt(re * re + im * im);
    }
    return out;
}

ShSeries PhantomDataset::fod(std::size_t row) const {
    return ShSeries(sh_order, fods.row(static_cast<Eigen::Index>(row)).transpose());
}

QSpaceSamples phantom_scheme(const PhantomConfig& cfg) {
    if (cfg.shells.empty()) throw InvalidArgument("phantom needs at least one shell");
    if (cfg.directions_per_shell < 1) throw InvalidArgument("directions per shell must be at least 1");
    std::vector<DirectionSet> per_shell;
    for (std::size_t s = 0; s < cfg.shells.size(); ++s)
        per_shell.push_back(generate_uniform_directions(static_cast<std::size_t>(cfg.directions_per_shell),
                                                        cfg.scheme_seed + s, cfg.scheme_iterations));
    return QSpaceSamples::shells(cfg.shells, per_shell);
}

std::vector<TensorCompartment> draw_compartments(const PhantomConfig& cfg, int voxel) {
    std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(voxel), 0));
    std::uniform_int_distribution<int> fiber_count(1, std::max(1, cfg.max_fibers));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    const int n = fiber_count(rng);
    Vec3 first;
    do {
        first = Vec3(normal(rng), normal(rng), normal(rng));
    } while (first.norm() < 1e-8);
    first.normalize();
    const Vec3 e1 = any_perpendicular(first);
    const Vec3 e2 = first.cross(e1);

    std::vector<TensorCompartment> out;
    double total = 0.0;
    for (int f = 0; f < n; ++f) {
        TensorCompartment c;
        c.axial = cfg.axial;
        c.radial = cfg.radial;
        if (f == 0) {
            c.orientation = first;
        } else {
            // Redraw until the axis clears every earlier fiber by the minimum crossing angle.
            const double min_cos = std::cos(cfg.min_crossing_deg * std::numbers::pi / 180.0);
            bool clear = false;
            for (int attempt = 0; attempt < 1000 && !clear; ++attempt) {
                const double deg = cfg.min_crossing_deg + (cfg.max_crossing_deg - cfg.min_crossing_deg) * unit(rng);
                const double theta = deg * std::numbers::pi / 180.0;
                const double phi = 2.0 * std::numbers::pi * unit(rng);
                c.orientation = (std::cos(theta) * first +
                                 std::sin(theta) * (std::cos(phi) * e1 + std::sin(phi) * e2)).normalized();
                clear = std::all_of(out.begin(), out.end(), [&](const TensorCompartment& prev) {
                    return std::abs(prev.orientation.dot(c.orientation)) <= min_cos + 1e-12;
                });
            }
            if (!clear) throw InvalidArgument("cannot place fibers with the requested minimum crossing angle");
        }
        c.fraction = cfg.min_fraction + (1.0 - cfg.min_fraction) * unit(rng);
        total += c.fraction;
        out.push_back(c);
    }
    for (auto& c : out) c.fraction /= total;
    return out;
}

PhantomDataset generate_dataset(const PhantomConfig& cfg) {
    if (cfg.n_voxels < 1) throw InvalidArgument("phantom needs at least one voxel");
    if (cfg.rotations_per_voxel < 0) throw InvalidArgument("rotation count must be non-negative");
    if (!(cfg.snr > 0.0)) throw InvalidArgument("snr must be positive");

    PhantomDataset ds{phantom_scheme(cfg), {}, {}, {}, cfg.sh_order};
    const FodProjector projector(cfg.sh_order, cfg.kappa,
                                 gauss_sphere_quadrature(static_cast<std::size_t>(cfg.quad_polar),
                                                         static_cast<std::size_t>(cfg.quad_azimuth)));
    const auto block = static_cast<std::size_t>(cfg.rotations_per_voxel) + 1;
    const std::size_t rows = block * static_cast<std::size_t>(cfg.n_voxels);
    ds.signals.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(ds.samples.size()));
    ds.fods.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(sh_coeff_count(cfg.sh_order)));
    ds.block_ids.assign(rows, 0);

    parallel_for(static_cast<std::size_t>(cfg.n_voxels), [&](std::size_t v) {
        const auto base = draw_compartments(cfg, static_cast<int>(v));
        for (std::size_t r = 0; r < block; ++r) {
            std::vector<TensorCompartment> comps = base;
            if (r > 0) {
                const Rotation rot = random_rotation(derive_seed(cfg.seed, v, r));
                for (auto& c : comps) c.orientation = rot.apply(c.orientation).normalized();
            }
            const std::size_t row = v * block + r;
            Eigen::VectorXd signal = simulate_signal(comps, ds.samples);
            if (!std::isinf(cfg.snr)) {
                const auto noisy = add_rician_noise(
                    std::span<const double>(signal.data(), static_cast<std::size_t>(signal.size())), cfg.snr,
                    derive_seed(cfg.seed ^ 0x6e6f697365ULL, row));
                signal = Eigen::Map<const Eigen::VectorXd>(noisy.data(), static_cast<Eigen::Index>(noisy.size()));
            }
            ds.signals.row(static_cast<Eigen::Index>(row)) = signal.transpose();
            ds.fods.row(static_cast<Eigen::Index>(row)) = projector.project(comps).coeffs().transpose();
            ds.block_ids[row] = static_cast<int>(v);
        }
    });
    return ds;
}

}  // namespace deepshore
