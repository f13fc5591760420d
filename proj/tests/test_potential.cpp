#include "doctest.h"

#include <cmath>

#include "dipoleforge/errors.hpp"
#include "dipoleforge/potential.hpp"

using namespace dipoleforge;

namespace {
const double omega_300 = two_pi * 300e6;
}

TEST_CASE("coefficients for the 40 um trap")
{
    const auto s = build_potential(40e-6, omega_300);
    CHECK(harmonic_coefficient(omega_300) == doctest::Approx(1.0101e7).epsilon(1e-4));
    CHECK(s.a3 == doctest::Approx(1.6834e11).epsilon(1e-4));
    CHECK(s.a4 == doctest::Approx(3.1564e15).epsilon(1e-4));
    CHECK(eval_potential(s, -s.d) == doctest::Approx(-s.a3 * std::pow(s.d, 3) / 4.0).epsilon(1e-12));
    CHECK(eval_potential(s, -s.d) == doctest::Approx(-2.694e-3).epsilon(2e-4));
    CHECK(eval_potential(s, 0.0) == 0.0);
}

TEST_CASE("stationary-point identities")
{
    for (double d : {5e-6, 20e-6, 40e-6}) {
        const auto s = build_potential(d, omega_300);
        const double scale = s.a3 * d * d;
        CHECK(std::abs(potential_slope(s, 0.0)) <= 1e-10 * scale);
        CHECK(std::abs(potential_slope(s, -d)) <= 1e-10 * scale);
        const double w2 = PhysConsts::elementary_charge * potential_curvature(s, -d) / PhysConsts::electron_mass;
        CHECK(w2 == doctest::Approx(omega_300 * omega_300).epsilon(1e-12));
    }
}

TEST_CASE("reconstruction of (d, omega)")
{
    const auto s = build_potential(23e-6, two_pi * 170e6);
    const auto p = invert_cubic_quartic(s.a3, s.a4);
    CHECK(p.d == doctest::Approx(23e-6).epsilon(1e-10));
    CHECK(p.omega_h_prime == doctest::Approx(two_pi * 170e6).epsilon(1e-10));
}

TEST_CASE("invalid inputs name their field")
{
    try {
        build_potential(-1.0, omega_300);
        FAIL("expected throw");
    } catch (const InputError& e) {
        CHECK(e.field() == "d_m");
    }
    CHECK_THROWS_AS(build_potential(40e-6, 0.0), InputError);
    CHECK_THROWS_AS(build_potential(40e-6, omega_300, -1.0), InputError);
}

TEST_CASE("stationary points")
{
    const auto s = build_potential(40e-6, omega_300);
    auto pts = stationary_points(s);
    REQUIRE(pts.size() == 2);
    CHECK(pts[0].z == doctest::Approx(-40e-6).epsilon(1e-12));
    CHECK(pts[0].kind == StationaryKind::minimum);
    CHECK(pts[1].z == 0.0);
    CHECK(pts[1].kind == StationaryKind::saddle);

    const double a2p = harmonic_coefficient(omega_300);
    pts = stationary_points(s.with_a2(a2p / 100.0));
    REQUIRE(pts.size() == 3);
    CHECK(pts[0].kind == StationaryKind::minimum);
    CHECK(pts[1].kind == StationaryKind::maximum);
    CHECK(pts[2].kind == StationaryKind::minimum);
    CHECK(pts[2].z == 0.0);
    CHECK(barrier_position(s.with_a2(a2p / 100.0)).has_value());

    const double threshold = double_well_threshold(s);
    CHECK(threshold == doctest::Approx(a2p / 4.0).epsilon(1e-12));
    pts = stationary_points(s.with_a2(1.01 * threshold));
    REQUIRE(pts.size() == 1);
    CHECK(pts[0].kind == StationaryKind::minimum);
    CHECK_FALSE(barrier_position(s.with_a2(a2p)).has_value());
}

TEST_CASE("mirror symmetry")
{
    PotentialSpec s{1e6, 2e11, 3e15, 40e-6, omega_300};
    PotentialSpec m = s;
    m.a3 = -s.a3;
    for (double z : {-30e-6, -1e-6, 4e-6, 17e-6}) CHECK(eval_potential(m, z) == doctest::Approx(eval_potential(s, -z)));
}

TEST_CASE("radial correction")
{
    const auto s = build_potential(40e-6, omega_300, 1e6);
    const RadialSpec r{};
    const auto m = radial_moments(r);
    CHECK(m.rho2 == doctest::Approx(0.0184e-12).epsilon(5e-3));
    CHECK(radial_corrected_potential(s, r, 0.0) == doctest::Approx(0.375 * s.a4 * m.rho4));

    const RadialSpec tight{1e20, 1e20};
    for (double z : {-40e-6, -3e-6, 2e-6})
        CHECK(radial_corrected_potential(s, tight, z) == doctest::Approx(eval_potential(s, z)).epsilon(1e-9));

    const RadialSpec a{two_pi * 1e9, two_pi * 2e9}, b{two_pi * 2e9, two_pi * 1e9};
    CHECK(radial_corrected_potential(s, a, -7e-6) == doctest::Approx(radial_corrected_potential(s, b, -7e-6)));

    // slope correction at the origin
    const double h = 1e-9;
    const double slope = (radial_corrected_potential(s, r, h) - radial_corrected_potential(s, r, -h)) / (2 * h);
    CHECK(slope == doctest::Approx(-1.5 * s.a3 * m.rho2).epsilon(1e-5));
    CHECK_THROWS_AS(radial_moments({0.0, 1.0}), InputError);
}
