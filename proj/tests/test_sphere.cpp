#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/LU>

#include "deepshore/error.hpp"
#include "deepshore/sphere.hpp"

using namespace deepshore;

namespace {

double angle_between(const Vec3& a, const Vec3& b) { return std::acos(std::clamp(a.dot(b), -1.0, 1.0)); }

}  // namespace

TEST_CASE("direction sets reject empty and non-unit input") {
    CHECK_THROWS_AS(DirectionSet(std::vector<Vec3>{}), InvalidArgument);
    CHECK_THROWS_AS(DirectionSet({Vec3(1.0, 0.0, 1e-3)}), InvalidArgument);
    CHECK_NOTHROW(DirectionSet({Vec3::UnitX(), Vec3::UnitZ()}));
    CHECK_THROWS_AS(DirectionSet::normalized({Vec3::Zero()}), InvalidArgument);
    CHECK(DirectionSet::normalized({Vec3(0.0, 3.0, 4.0)})[0].isApprox(Vec3(0.0, 0.6, 0.8)));
}

TEST_CASE("uniform directions") {
    SUBCASE("a single direction is a unit vector") {
        const auto d = generate_uniform_directions(1, 3, 100);
        REQUIRE(d.size() == 1);
        CHECK(std::abs(d[0].norm() - 1.0) < 1e-12);
    }
    SUBCASE("zero directions is an error") {
        CHECK_THROWS_AS(generate_uniform_directions(0, 7, 100), InvalidArgument);
    }
    SUBCASE("repulsion separates points beyond the random start") {
        const auto start = generate_uniform_directions(100, 7, 0);
        const auto relaxed = generate_uniform_directions(100, 7, 1000);
        CHECK(min_axis_separation(relaxed) > min_axis_separation(start));
        CHECK(electrostatic_energy(relaxed.vectors()) < electrostatic_energy(start.vectors()));
    }
    SUBCASE("deterministic per seed") {
        CHECK(generate_uniform_directions(30, 11, 200) == generate_uniform_directions(30, 11, 200));
        CHECK_FALSE(generate_uniform_directions(30, 11, 200) == generate_uniform_directions(30, 12, 200));
    }
}

TEST_CASE("electrostatic energy never increases during descent") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto start = generate_uniform_directions(40, seed, 0);
        const auto result = minimize_repulsion(start, 300);
        REQUIRE(result.energy_history.size() >= 2);
        for (std::size_t i = 1; i < result.energy_history.size(); ++i)
            CHECK(result.energy_history[i] <= result.energy_history[i - 1]);
    }
}

TEST_CASE("coincident starting points are separated") {
    const DirectionSet start({Vec3::UnitZ(), Vec3::UnitZ(), Vec3::UnitX()});
    const auto result = minimize_repulsion(start, 200);
    CHECK(std::isfinite(result.energy_history.back()));
    CHECK(min_axis_separation(result.directions) > 0.5);
}

TEST_CASE("energy counts each pair with its antipode") {
    const std::vector<Vec3> pair{Vec3::UnitX(), Vec3::UnitY()};
    CHECK(electrostatic_energy(pair) == doctest::Approx(2.0 / std::sqrt(2.0)).epsilon(1e-14));
}

TEST_CASE("random rotations") {
    CHECK(random_rotation(0).matrix() == random_rotation(0).matrix());
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const Mat3 r = random_rotation(seed).matrix();
        CHECK((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(std::abs(r.determinant() - 1.0) < 1e-12);
    }
    SUBCASE("Haar: a fixed vector is carried uniformly over the sphere") {
        Vec3 mean = Vec3::Zero();
        for (std::uint64_t seed = 0; seed < 10000; ++seed) mean += random_rotation(seed).apply(Vec3(0.3, -0.5, 0.81).normalized());
        CHECK((mean / 10000.0).norm() < 0.05);
    }
    CHECK_THROWS_AS(Rotation(Mat3::Identity() * 2.0), InvalidArgument);
    CHECK_THROWS_AS(Rotation(Vec3(1.0, 1.0, -1.0).asDiagonal()), InvalidArgument);
}

TEST_CASE("rotating directions") {
    const auto dirs = generate_uniform_directions(20, 5, 50);
    const auto same = rotate_directions(dirs, Rotation());
    for (std::size_t i = 0; i < dirs.size(); ++i) CHECK((same[i] - dirs[i]).norm() < 1e-15);

    const auto r = Rotation::about_axis(Vec3::UnitX(), std::numbers::pi / 2.0);
    const Vec3 z = rotate_directions(DirectionSet({Vec3::UnitZ()}), r)[0];
    CHECK((z - Vec3(0.0, -1.0, 0.0)).norm() < 1e-12);

    const auto rr = rotate_directions(dirs, random_rotation(9));
    for (std::size_t i = 0; i < dirs.size(); ++i)
        for (std::size_t j = i + 1; j < dirs.size(); ++j)
            CHECK(std::abs(angle_between(dirs[i], dirs[j]) - angle_between(rr[i], rr[j])) < 1e-12);
}

TEST_CASE("rotations compose") {
    const auto dirs = generate_uniform_directions(25, 4, 20);
    for (std::uint64_t s = 0; s < 10; ++s) {
        const Rotation r1 = random_rotation(2 * s);
        const Rotation r2 = random_rotation(2 * s + 1);
        const auto twice = rotate_directions(rotate_directions(dirs, r1), r2);
        const auto once = rotate_directions(dirs, r2 * r1);
        for (std::size_t i = 0; i < dirs.size(); ++i) CHECK((twice[i] - once[i]).norm() < 1e-12);
    }
}

TEST_CASE("Gauss sphere quadrature") {
    CHECK_THROWS_AS(gauss_sphere_quadrature(0, 5), InvalidArgument);
    CHECK_THROWS_AS(gauss_sphere_quadrature(5, 0), InvalidArgument);

    const auto quad = gauss_sphere_quadrature(16, 33);
    double total = 0.0;
    for (double w : quad.weights) {
        CHECK(w > 0.0);
        total += w;
    }
    CHECK(std::abs(total - 4.0 * std::numbers::pi) < 1e-12);

    SUBCASE("polynomial moments are exact") {
        // ∫ z² dΩ = 4π/3, ∫ x⁴ dΩ = 4π/5, ∫ x²y²z² dΩ = 4π/105
        double z2 = 0.0, x4 = 0.0, xyz = 0.0;
        for (std::size_t i = 0; i < quad.weights.size(); ++i) {
            const Vec3& p = quad.nodes[i];
            z2 += quad.weights[i] * p.z() * p.z();
            x4 += quad.weights[i] * std::pow(p.x(), 4);
            xyz += quad.weights[i] * p.x() * p.x() * p.y() * p.y() * p.z() * p.z();
        }
        CHECK(std::abs(z2 - 4.0 * std::numbers::pi / 3.0) < 1e-12);
        CHECK(std::abs(x4 - 4.0 * std::numbers::pi / 5.0) < 1e-12);
        CHECK(std::abs(xyz - 4.0 * std::numbers::pi / 105.0) < 1e-13);
    }
}

TEST_CASE("Gauss-Legendre nodes integrate polynomials up to degree 2n-1") {
    std::vector<double> x, w;
    gauss_legendre(7, x, w);
    for (int p = 0; p <= 13; ++p) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * std::pow(x[i], p);
        const double exact = (p % 2) ? 0.0 : 2.0 / (p + 1);
        CHECK(std::abs(s - exact) < 1e-14);
    }
}

TEST_CASE("bvec text round trip") {
    const auto dirs = generate_uniform_directions(12, 2, 30);
    std::stringstream s;
    write_bvec(s, dirs);
    const auto back = read_bvec(s);
    REQUIRE(back.size() == dirs.size());
    for (std::size_t i = 0; i < dirs.size(); ++i) CHECK((back[i] - dirs[i]).norm() < 1e-15);

    std::stringstream bad("1 0\n0 1\n");
    CHECK_THROWS(read_bvec(bad));
}
