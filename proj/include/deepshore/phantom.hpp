#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "deepshore/sh.hpp"
#include "deepshore/shore.hpp"
#include "deepshore/sphere.hpp"

namespace deepshore {

/// Cylindrically symmetric tensor compartment.
struct TensorCompartment {
    double axial = 1.7e-3;   // mm²/s
    double radial = 0.3e-3;  // mm²/s
    Vec3 orientation = Vec3::UnitZ();
    double fraction = 1.0;
};

/// Multi-tensor attenuation Σ f·exp(−b gᵀDg); equals 1 at b = 0.
Eigen::VectorXd simulate_signal(std::span<const TensorCompartment> compartments, const QSpaceSamples& samples);

/// Watson density exp(κ((μ·x)² − 1)), scaled to peak at 1.
double watson_kernel(const Vec3& mean_axis, double kappa, const Vec3& x);

/// Projects the fraction-weighted Watson mixture onto even harmonics by
/// quadrature, normalized to unit mass under the same quadrature.
ShSeries ground_truth_fod(std::span<const TensorCompartment> compartments, int max_degree, double kappa,
                          const SphereQuadrature& quad);

/// Precomputes the quadrature basis so many voxels can be projected cheaply.
class FodProjector {
public:
    FodProjector(int max_degree, double kappa, SphereQuadrature quad);
    ShSeries project(std::span<const TensorCompartment> compartments) const;

private:
    int max_degree_;
    double kappa_;
    SphereQuadrature quad_;
    Eigen::MatrixXd weighted_basis_;  // coeffs × nodes, quadrature weights folded in
};

/// Magnitude of signal plus complex Gaussian noise with σ = 1/snr. An infinite
/// snr returns the input unchanged.
std::vector<double> add_rician_noise(std::span<const double> values, double snr, std::uint64_t seed);

struct PhantomConfig {
    std::vector<double> shells{3000.0, 6000.0, 9000.0, 12000.0};
    int directions_per_shell = 25;
    std::uint64_t scheme_seed = 1;
    int scheme_iterations = 1000;
    double min_crossing_deg = 30.0;
    double max_crossing_deg = 90.0;
    int max_fibers = 3;
    double min_fraction = 0.3;  // per-compartment raw weight drawn from [min_fraction, 1]
    double axial = 1.7e-3;
    double radial = 0.3e-3;
    double kappa = 20.0;
    int sh_order = 8;
    int quad_polar = 50;
    int quad_azimuth = 101;
    double snr = 30.0;  // infinity disables noise
    int n_voxels = 10;
    int rotations_per_voxel = 100;
    std::uint64_t seed = 0;
};

struct PhantomDataset {
    QSpaceSamples samples;
    Eigen::MatrixXd signals;  // rows × samples
    Eigen::MatrixXd fods;     // rows × sh_coeff_count(sh_order)
    std::vector<int> block_ids;
    int sh_order = 8;

    std::size_t rows() const noexcept { return static_cast<std::size_t>(signals.rows()); }
    ShSeries fod(std::size_t row) const;
};

/// The acquisition scheme: per-shell repulsion direction sets, shell-major.
QSpaceSamples phantom_scheme(const PhantomConfig& cfg);

/// Compartments of one base voxel, drawn from a stream keyed on (seed, voxel).
std::vector<TensorCompartment> draw_compartments(const PhantomConfig& cfg, int voxel);

/// Each base voxel is followed by rotations_per_voxel jointly rotated copies.
/// Rows of one block share a block id equal to the base voxel index.
PhantomDataset generate_dataset(const PhantomConfig& cfg);

/// Mixes seed material into an independent stream seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace deepshore
