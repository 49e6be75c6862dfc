#include <doctest.h>

#include <cmath>
#include <numbers>

#include "deepshore/error.hpp"
#include "deepshore/phantom.hpp"

using namespace deepshore;

namespace {

QSpaceSamples one_sample(double b, const Vec3& g) { return QSpaceSamples({b}, DirectionSet::normalized({g})); }

double degree_energy(const ShSeries& s, int l) {
    double e = 0.0;
    for (int m = -l; m <= l; ++m) e += s.coeffs()(static_cast<Eigen::Index>(sh_index(l, m))) * s.coeffs()(static_cast<Eigen::Index>(sh_index(l, m)));
    return e;
}

}  // namespace

TEST_CASE("tensor attenuation") {
    const std::vector<TensorCompartment> z{{1.7e-3, 0.3e-3, Vec3::UnitZ(), 1.0}};
    CHECK(simulate_signal(z, one_sample(1000.0, Vec3::UnitZ()))(0) == doctest::Approx(0.18268).epsilon(1e-4));
    CHECK(simulate_signal(z, one_sample(1000.0, Vec3::UnitX()))(0) == doctest::Approx(0.74082).epsilon(1e-4));
    CHECK(simulate_signal(z, one_sample(0.0, Vec3::UnitY()))(0) == 1.0);

    const std::vector<TensorCompartment> pair{{1.7e-3, 0.3e-3, Vec3::UnitZ(), 0.4}, {1.7e-3, 0.3e-3, Vec3::UnitX(), 0.6}};
    const double expected = 0.4 * std::exp(-1.7) + 0.6 * std::exp(-0.3);
    CHECK(simulate_signal(pair, one_sample(1000.0, Vec3::UnitZ()))(0) == doctest::Approx(expected).epsilon(1e-14));

    const std::vector<TensorCompartment> bad{{1.7e-3, 0.3e-3, Vec3::UnitZ(), 0.5}};
    CHECK_THROWS_AS(simulate_signal(bad, one_sample(1000.0, Vec3::UnitZ())), InvalidArgument);
    CHECK_THROWS_AS(simulate_signal(std::vector<TensorCompartment>{}, one_sample(1000.0, Vec3::UnitZ())),
                    InvalidArgument);
}

TEST_CASE("attenuation properties") {
    PhantomConfig cfg;
    const auto comps = draw_compartments(cfg, 3);
    const DirectionSet dirs = generate_uniform_directions(30, 2, 200);
    SUBCASE("rotation equivariance") {
        const Rotation r = random_rotation(17);
        std::vector<TensorCompartment> rotated = comps;
        for (auto& c : rotated) c.orientation = r.apply(c.orientation);
        const std::vector<double> shells{2000.0};
        const auto s1 = simulate_signal(comps, QSpaceSamples::shells(shells, dirs));
        const auto s2 = simulate_signal(rotated, QSpaceSamples::shells(shells, rotate_directions(dirs, r)));
        CHECK((s1 - s2).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("monotone in b") {
        const std::vector<double> shells{0.0, 1000.0, 3000.0, 6000.0, 12000.0};
        const auto s = simulate_signal(comps, QSpaceSamples::shells(shells, dirs));
        for (std::size_t k = 1; k < shells.size(); ++k)
            for (std::size_t i = 0; i < dirs.size(); ++i)
                CHECK(s(static_cast<Eigen::Index>(k * dirs.size() + i)) <= s(static_cast<Eigen::Index>((k - 1) * dirs.size() + i)));
    }
}

TEST_CASE("compartment draws") {
    PhantomConfig cfg;
    for (int v = 0; v < 200; ++v) {
        const auto comps = draw_compartments(cfg, v);
        REQUIRE(!comps.empty());
        CHECK(comps.size() <= 3);
        double total = 0.0;
        for (const auto& c : comps) total += c.fraction;
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
        for (std::size_t i = 0; i < comps.size(); ++i)
            for (std::size_t j = i + 1; j < comps.size(); ++j) {
                const double angle = std::acos(std::min(1.0, std::abs(comps[i].orientation.dot(comps[j].orientation)))) * 180.0 / std::numbers::pi;
                CHECK(angle >= 30.0 - 1e-9);
            }
    }
    CHECK(draw_compartments(cfg, 4)[0].orientation == draw_compartments(cfg, 4)[0].orientation);
}

TEST_CASE("ground-truth FODs") {
    const auto quad = gauss_sphere_quadrature(50, 101);
    const FodProjector proj(8, 20.0, quad);
    SUBCASE("z-aligned fiber is zonal") {
        const std::vector<TensorCompartment> z{{1.7e-3, 0.3e-3, Vec3::UnitZ(), 1.0}};
        const ShSeries f = proj.project(z);
        for (int l = 0; l <= 8; l += 2)
            for (int m = -l; m <= l; ++m)
                if (m != 0) CHECK(std::abs(f.coeffs()(static_cast<Eigen::Index>(sh_index(l, m)))) < 1e-10);
        CHECK(f.coeffs()(0) == doctest::Approx(0.5 / std::sqrt(std::numbers::pi)).epsilon(1e-8));
    }
    SUBCASE("order of compartments is irrelevant") {
        const std::vector<TensorCompartment> a{{1.7e-3, 0.3e-3, Vec3::UnitZ(), 0.3}, {1.7e-3, 0.3e-3, Vec3(1, 1, 0).normalized(), 0.7}};
        const std::vector<TensorCompartment> b{a[1], a[0]};
        CHECK((proj.project(a).coeffs() - proj.project(b).coeffs()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((ground_truth_fod(a, 8, 20.0, quad).coeffs() - proj.project(a).coeffs()).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("truncation ringing stays bounded") {
        // Degree-8 truncation of a sharp Watson lobe rings below zero; a broad one does not.
        const DirectionSet dirs = generate_uniform_directions(500, 4, 200);
        PhantomConfig cfg;
        for (int v = 0; v < 20; ++v) {
            const auto s = sample_sh(proj.project(draw_compartments(cfg, v)), dirs);
            CHECK(s.minCoeff() > -0.2 * s.maxCoeff());
        }
        const FodProjector broad(8, 5.0, quad);
        const std::vector<TensorCompartment> z{{1.7e-3, 0.3e-3, Vec3::UnitZ(), 1.0}};
        CHECK(sample_sh(broad.project(z), dirs).minCoeff() > -1e-6);
    }
    CHECK_THROWS_AS(FodProjector(8, 0.0, quad), InvalidArgument);
    CHECK(watson_kernel(Vec3::UnitZ(), 20.0, Vec3::UnitZ()) == doctest::Approx(1.0));
    CHECK(watson_kernel(Vec3::UnitZ(), 20.0, Vec3::UnitX()) == doctest::Approx(std::exp(-20.0)));
}

TEST_CASE("Rician noise") {
    const std::vector<double> v{0.2, 0.5, 1.0};
    CHECK(add_rician_noise(v, std::numeric_limits<double>::infinity(), 3) == v);
    const auto noisy = add_rician_noise(v, 30.0, 3);
    CHECK(noisy == add_rician_noise(v, 30.0, 3));
    CHECK_THROWS_AS(add_rician_noise(v, 0.0, 3), InvalidArgument);

    // Zero signal gives a Rayleigh magnitude with mean σ√(π/2).
    const std::vector<double> zeros(100000, 0.0);
    const auto r = add_rician_noise(zeros, 10.0, 11);
    double mean = 0.0;
    for (double x : r) {
        CHECK_FALSE(x < 0.0);
        mean += x;
    }
    mean /= static_cast<double>(r.size());
    CHECK(mean == doctest::Approx(0.1 * std::sqrt(std::numbers::pi / 2.0)).epsilon(0.02));
}

TEST_CASE("dataset generation") {
    PhantomConfig cfg;
    cfg.n_voxels = 5;
    cfg.snr = std::numeric_limits<double>::infinity();
    const PhantomDataset ds = generate_dataset(cfg);
    CHECK(ds.rows() == 505);
    CHECK(ds.signals.cols() == 100);
    CHECK(ds.fods.cols() == 45);
    CHECK(ds.block_ids[100] == 0);
    CHECK(ds.block_ids[101] == 1);
    CHECK(ds.samples.distinct_shells() == std::vector<double>{3000.0, 6000.0, 9000.0, 12000.0});

    SUBCASE("rotated copies match rotated ground truth") {
        const DirectionSet dirs = generate_uniform_directions(300, 5, 200);
        for (std::size_t r : {1u, 37u, 100u}) {
            const Rotation rot = random_rotation(derive_seed(cfg.seed, 2, r));
            const ShSeries expected = rotate_sh(ds.fod(202), rot, dirs);
            CHECK(acc(expected, ds.fod(202 + r)) >= 0.999);
            for (int l = 0; l <= 8; l += 2)
                CHECK(degree_energy(ds.fod(202 + r), l) == doctest::Approx(degree_energy(ds.fod(202), l)).epsilon(1e-6));
        }
    }
    SUBCASE("deterministic") {
        const PhantomDataset again = generate_dataset(cfg);
        CHECK(again.signals == ds.signals);
        CHECK(again.fods == ds.fods);
        cfg.seed = 1;
        CHECK(generate_dataset(cfg).fods != ds.fods);
    }
    SUBCASE("noisy signals stay non-negative") {
        cfg.snr = 30.0;
        cfg.n_voxels = 2;
        cfg.rotations_per_voxel = 3;
        CHECK(generate_dataset(cfg).signals.minCoeff() >= 0.0);
    }
    cfg.n_voxels = 0;
    CHECK_THROWS_AS(generate_dataset(cfg), InvalidArgument);
}
