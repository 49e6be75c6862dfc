#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace deepshore {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Non-empty ordered list of unit vectors.
class DirectionSet {
public:
    /// Throws InvalidArgument if empty or any norm deviates from 1 by more than 1e-12.
    explicit DirectionSet(std::vector<Vec3> directions);

    /// Normalizes every vector first; zero vectors are rejected.
    static DirectionSet normalized(std::vector<Vec3> directions);

    std::size_t size() const noexcept { return dirs_.size(); }
    const Vec3& operator[](std::size_t i) const { return dirs_[i]; }
    const std::vector<Vec3>& vectors() const noexcept { return dirs_; }
    auto begin() const noexcept { return dirs_.begin(); }
    auto end() const noexcept { return dirs_.end(); }

    /// Concatenation (used to stack shells).
    DirectionSet concat(const DirectionSet& other) const;

    friend bool operator==(const DirectionSet&, const DirectionSet&) = default;

private:
    std::vector<Vec3> dirs_;
};

/// Proper rotation (orthonormal, det = +1).
class Rotation {
public:
    Rotation() : m_(Mat3::Identity()) {}
    /// Throws InvalidArgument unless RᵀR = I and det R = 1 within 1e-12.
    explicit Rotation(const Mat3& m);

    static Rotation about_axis(const Vec3& axis, double angle);

    const Mat3& matrix() const noexcept { return m_; }
    Rotation inverse() const { return Rotation(m_.transpose()); }
    Vec3 apply(const Vec3& v) const { return m_ * v; }

    /// (a * b) applies b first.
    friend Rotation operator*(const Rotation& a, const Rotation& b) { return Rotation(a.m_ * b.m_); }

private:
    Mat3 m_;
};

struct SphereQuadrature {
    DirectionSet nodes;
    std::vector<double> weights;  // positive, sum to 4π
};

/// Antipodally symmetric Coulomb energy Σ_{i<j} 1/|di-dj| + 1/|di+dj|.
double electrostatic_energy(std::span<const Vec3> dirs);

struct RepulsionResult {
    DirectionSet directions;
    std::vector<double> energy_history;  // energy after each accepted/rejected iteration
};

/// Projected gradient descent on the symmetric Coulomb energy, with step
/// halving whenever a trial step would raise the energy.
RepulsionResult minimize_repulsion(const DirectionSet& start, int iterations);

/// Seeded random start followed by `iterations` descent steps.
DirectionSet generate_uniform_directions(std::size_t n, std::uint64_t seed, int iterations = 1000);

/// Haar-uniform rotation from a seeded unit quaternion.
Rotation random_rotation(std::uint64_t seed);

DirectionSet rotate_directions(const DirectionSet& dirs, const Rotation& r);

/// Gauss-Legendre in cos(polar) times uniform azimuth.
SphereQuadrature gauss_sphere_quadrature(std::size_t n_polar, std::size_t n_azimuth);

/// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_legendre(std::size_t n, std::vector<double>& nodes, std::vector<double>& weights);

/// Smallest angle between the lines through any two directions (radians).
double min_axis_separation(const DirectionSet& dirs);

/// FSL-style text: three rows (x, y, z), one column per direction.
void write_bvec(std::ostream& out, const DirectionSet& dirs);
DirectionSet read_bvec(std::istream& in);

}  // namespace deepshore
