#include "deepshore/sphere.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <utility>

#include <Eigen/Geometry>
#include <Eigen/LU>

#include "deepshore/error.hpp"

namespace deepshore {

DirectionSet::DirectionSet(std::vector<Vec3> directions) : dirs_(std::move(directions)) {
    if (dirs_.empty()) throw InvalidArgument("direction set must be non-empty");
    for (const auto& d : dirs_) {
        if (!d.allFinite() || std::abs(d.norm() - 1.0) > 1e-12)
            throw InvalidArgument("direction set contains a non-unit vector");
    }
}

DirectionSet DirectionSet::normalized(std::vector<Vec3> directions) {
    for (auto& d : directions) {
        const double n = d.norm();
        if (!(n > 0.0) || !std::isfinite(n)) throw InvalidArgument("cannot normalize a zero or non-finite vector");
        d /= n;
    }
    return DirectionSet(std::move(directions));
}

DirectionSet DirectionSet::concat(const DirectionSet& other) const {
    std::vector<Vec3> all = dirs_;
    all.insert(all.end(), other.dirs_.begin(), other.dirs_.end());
    return DirectionSet(std::move(all));
}

Rotation::Rotation(const Mat3& m) : m_(m) {
    const Mat3 gram = m.transpose() * m;
    if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-12 || std::abs(m.determinant() - 1.0) > 1e-12)
        throw InvalidArgument("matrix is not a proper rotation");
}

Rotation Rotation::about_axis(const Vec3& axis, double angle) {
    return Rotation(Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix());
}

double electrostatic_energy(std::span<const Vec3> dirs) {
    double energy = 0.0;
    for (std::size_t i = 0; i < dirs.size(); ++i) {
        for (std::size_t j = i + 1; j < dirs.size(); ++j) {
            energy += 1.0 / (dirs[i] - dirs[j]).norm() + 1.0 / (dirs[i] + dirs[j]).norm();
        }
    }
    return energy;
}

namespace {

std::vector<Vec3> repulsion_gradient(const std::vector<Vec3>& d) {
    std::vector<Vec3> grad(d.size(), Vec3::Zero());
    for (std::size_t i = 0; i < d.size(); ++i) {
        for (std::size_t j = i + 1; j < d.size(); ++j) {
            const Vec3 minus = d[i] - d[j];
            const Vec3 plus = d[i] + d[j];
            const double rm = minus.norm();
            const double rp = plus.norm();
            const Vec3 gm = minus / (rm * rm * rm);
            const Vec3 gp = plus / (rp * rp * rp);
            // dE/d(di) = -gm - gp ; dE/d(dj) = gm - gp
            grad[i] -= gm + gp;
            grad[j] += gm - gp;
        }
    }
    // Project onto the tangent plane.
    for (std::size_t i = 0; i < d.size(); ++i) grad[i] -= grad[i].dot(d[i]) * d[i];
    return grad;
}

// Separates coincident or antipodal pairs, which would make the energy infinite.
void jitter_degenerate(std::vector<Vec3>& d, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1e-6);
    for (int pass = 0; pass < 8; ++pass) {
        bool moved = false;
        for (std::size_t i = 0; i < d.size(); ++i) {
            for (std::size_t j = i + 1; j < d.size(); ++j) {
                if ((d[i] - d[j]).norm() < 1e-9 || (d[i] + d[j]).norm() < 1e-9) {
                    d[j] += Vec3(normal(rng), normal(rng), normal(rng));
                    d[j].normalize();
                    moved = true;
                }
            }
        }
        if (!moved) return;
    }
}

}  // namespace

RepulsionResult minimize_repulsion(const DirectionSet& start, int iterations) {
    if (iterations < 0) throw InvalidArgument("iterations must be non-negative");
    std::vector<Vec3> d = start.vectors();
    std::mt19937_64 rng(0x5eedULL + d.size());
    jitter_degenerate(d, rng);

    std::vector<double> history;
    double energy = electrostatic_energy(d);
    history.push_back(energy);
    if (d.size() < 2) return {DirectionSet::normalized(std::move(d)), history};

    double step = 0.0;
    for (int it = 0; it < iterations; ++it) {
        const auto grad = repulsion_gradient(d);
        double gmax = 0.0;
        for (const auto& g : grad) gmax = std::max(gmax, g.norm());
        if (gmax == 0.0) break;
        // First step moves the most-pushed point by about 0.1 rad.
        if (step == 0.0) step = 0.1 / gmax;

        bool accepted = false;
        for (int halving = 0; halving < 40 && !accepted; ++halving) {
            std::vector<Vec3> trial(d.size());
            for (std::size_t i = 0; i < d.size(); ++i) trial[i] = (d[i] - step * grad[i]).normalized();
            const double trial_energy = electrostatic_energy(trial);
            if (trial_energy <= energy) {
                d = std::move(trial);
                energy = trial_energy;
                accepted = true;
                step *= 1.2;
            } else {
                step *= 0.5;
            }
        }
        history.push_back(energy);
        if (!accepted) break;
    }
    return {DirectionSet::normalized(std::move(d)), std::move(history)};
}

DirectionSet generate_uniform_directions(std::size_t n, std::uint64_t seed, int iterations) {
    if (n == 0) throw InvalidArgument("direction count must be at least 1");
    if (iterations < 0) throw InvalidArgument("iterations must be non-negative");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Vec3> d(n);
    for (auto& v : d) {
        do {
            v = Vec3(normal(rng), normal(rng), normal(rng));
        } while (v.norm() < 1e-8);
        v.normalize();
    }
    if (iterations == 0) {
        jitter_degenerate(d, rng);
        return DirectionSet::normalized(std::move(d));
    }
    return minimize_repulsion(DirectionSet::normalized(std::move(d)), iterations).directions;
}

Rotation random_rotation(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::Quaterniond q;
    do {
        q = Eigen::Quaterniond(normal(rng), normal(rng), normal(rng), normal(rng));
    } while (q.norm() < 1e-8);
    q.normalize();
    return Rotation(q.toRotationMatrix());
}

DirectionSet rotate_directions(const DirectionSet& dirs, const Rotation& r) {
    std::vector<Vec3> out;
    out.reserve(dirs.size());
    for (const auto& d : dirs) out.push_back(r.apply(d));
    return DirectionSet::normalized(std::move(out));
}

namespace {

// Legendre P_n(x) and its derivative.
std::pair<double, double> legendre_with_derivative(std::size_t n, double x) {
    double p0 = 1.0;
    double p1 = x;
    if (n == 0) return {1.0, 0.0};
    for (std::size_t k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / static_cast<double>(k);
        p0 = p1;
        p1 = p2;
    }
    const double dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
    return {p1, dp};
}

}  // namespace

void gauss_legendre(std::size_t n, std::vector<double>& nodes, std::vector<double>& weights) {
    nodes.assign(n, 0.0);
    weights.assign(n, 0.0);
    for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
        for (int it = 0; it < 100; ++it) {
            const auto [p, dp] = legendre_with_derivative(n, x);
            const double dx = p / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        const double dp = legendre_with_derivative(n, x).second;
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
}

SphereQuadrature gauss_sphere_quadrature(std::size_t n_polar, std::size_t n_azimuth) {
    if (n_polar == 0 || n_azimuth == 0) throw InvalidArgument("quadrature counts must be at least 1");
    std::vector<double> z, wz;
    gauss_legendre(n_polar, z, wz);
    std::vector<Vec3> nodes;
    std::vector<double> weights;
    nodes.reserve(n_polar * n_azimuth);
    weights.reserve(n_polar * n_azimuth);
    const double dphi = 2.0 * std::numbers::pi / static_cast<double>(n_azimuth);
    for (std::size_t i = 0; i < n_polar; ++i) {
        const double s = std::sqrt(std::max(0.0, 1.0 - z[i] * z[i]));
        for (std::size_t j = 0; j < n_azimuth; ++j) {
            const double phi = dphi * static_cast<double>(j);
            nodes.push_back(Vec3(s * std::cos(phi), s * std::sin(phi), z[i]).normalized());
            weights.push_back(wz[i] * dphi);
        }
    }
    return {DirectionSet(std::move(nodes)), std::move(weights)};
}

double min_axis_separation(const DirectionSet& dirs) {
    double best = std::numbers::pi / 2.0;
    for (std::size_t i = 0; i < dirs.size(); ++i) {
        for (std::size_t j = i + 1; j < dirs.size(); ++j) {
            const double c = std::min(1.0, std::abs(dirs[i].dot(dirs[j])));
            best = std::min(best, std::acos(c));
        }
    }
    return best;
}

void write_bvec(std::ostream& out, const DirectionSet& dirs) {
    out << std::setprecision(17);
    for (int axis = 0; axis < 3; ++axis) {
        for (std::size_t i = 0; i < dirs.size(); ++i) {
            if (i) out << ' ';
            out << dirs[i][axis];
        }
        out << '\n';
    }
}

DirectionSet read_bvec(std::istream& in) {
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::vector<double> row;
        double v;
        while (ls >> v) row.push_back(v);
        if (!row.empty()) rows.push_back(std::move(row));
    }
    if (rows.size() != 3 || rows[0].size() != rows[1].size() || rows[0].size() != rows[2].size())
        throw FormatError("bvec file must hold three rows of equal length");
    std::vector<Vec3> dirs;
    for (std::size_t i = 0; i < rows[0].size(); ++i) {
        Vec3 d(rows[0][i], rows[1][i], rows[2][i]);
        // b=0 volumes carry a null vector in FSL tables.
        if (d.norm() == 0.0) d = Vec3::UnitZ();
        dirs.push_back(d);
    }
    return DirectionSet::normalized(std::move(dirs));
}

}  // namespace deepshore
