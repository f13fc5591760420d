#include "doctest.h"

#include <cmath>

#include "dipoleforge/errors.hpp"
#include "dipoleforge/faquad.hpp"
#include "dipoleforge/potential.hpp"

using namespace dipoleforge;

namespace {

const double e = PhysConsts::elementary_charge;
const double m = PhysConsts::electron_mass;
const double hbar = PhysConsts::hbar;

// dt/da2 straight from the ground-state bound of a harmonic well (only n = 2 couples).
double harmonic_dt_da2(double a2, double eps)
{
    const double omega = std::sqrt(2.0 * e * a2 / m);
    const double z2 = std::sqrt(2.0) * hbar / (2.0 * m * omega);
    const double bound = std::pow(2.0 * hbar * omega, 2) / (e * z2);
    return -hbar / (eps * bound);
}

}  // namespace

TEST_CASE("closed form round trip")
{
    const double a2 = 1.0e5, eps = 0.3;
    for (double t : {0.0, 1e-9, 1e-7, 3e-6}) {
        const double v = stage1_closed_form(a2, eps, t);
        CHECK(stage1_time_to(a2, eps, v) == doctest::Approx(t).epsilon(1e-10));
    }
    CHECK(stage1_closed_form(a2, eps, 0.0) == doctest::Approx(a2).epsilon(1e-14));
}

TEST_CASE("closed form matches direct quadrature of the adiabatic bound")
{
    const double a0 = 2.0e5, a1 = 2.0e3, eps = 0.1;
    // midpoint rule in log a2
    const int n = 200000;
    const double l0 = std::log(a0), l1 = std::log(a1);
    double t = 0.0;
    for (int k = 0; k < n; ++k) {
        const double a = std::exp(l0 + (l1 - l0) * (k + 0.5) / n);
        t += harmonic_dt_da2(a, eps) * a * (l1 - l0) / n;
    }
    CHECK(stage1_time_to(a0, eps, a1) == doctest::Approx(t).epsilon(1e-6));
}

TEST_CASE("harmonic FAQUAD reproduces the closed form")
{
    const double a0 = 2.0e5, a1 = 2.0e3, eps = 0.2;
    const auto s = faquad_schedule(HarmonicProvider(0, 6), a0, a1, eps);
    REQUIRE(s.times.size() > 10);
    CHECK_NOTHROW(s.validate());
    double worst = 0.0;
    for (std::size_t k = 1; k < s.times.size(); ++k) {
        const double exact = stage1_time_to(a0, eps, s.a2[k]);
        worst = std::max(worst, std::abs(s.times[k] / exact - 1.0));
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("duration times epsilon is invariant")
{
    const double a0 = 2.0e5, a1 = 5.0e3;
    const auto s1 = faquad_schedule(HarmonicProvider(0, 6), a0, a1, 0.1);
    const auto s2 = faquad_schedule(HarmonicProvider(0, 6), a0, a1, 0.4);
    CHECK(s1.duration() * 0.1 == doctest::Approx(s2.duration() * 0.4).epsilon(1e-6));
    const auto r = s1.rescaled(2.0 * s1.duration());
    CHECK(r.duration() * r.epsilon == doctest::Approx(s1.duration() * s1.epsilon).epsilon(1e-12));
    CHECK(r.a2_at(r.duration() / 4) == doctest::Approx(s1.a2_at(s1.duration() / 4)).epsilon(1e-12));
}

TEST_CASE("right-well spectrum approaches the harmonic bound deep in the trap")
{
    const auto family = build_potential(5e-6, two_pi * 300e6);
    const RightWellProvider rw(family, 4096, 0, 6);
    const HarmonicProvider ho(0, 6);
    const double a2 = harmonic_coefficient(two_pi * 300e6);
    CHECK(rw.adiabatic_bound(a2) == doctest::Approx(ho.adiabatic_bound(a2)).epsilon(0.1));
}

TEST_CASE("schedule composition")
{
    const auto s1 = stage1_schedule(1.0e5, 5.0e4, 0.5, 101);
    CHECK(s1.a2.back() == 5.0e4);
    auto s2 = faquad_schedule(HarmonicProvider(0, 6), 5.0e4, 1.0e4, 0.5);
    const auto all = compose_stages(s1, s2);
    CHECK(all.t_m == doctest::Approx(s1.duration()));
    CHECK_NOTHROW(all.validate());
    CHECK(all.stage.front() == 1);
    CHECK(all.stage.back() == 2);
    auto bad = faquad_schedule(HarmonicProvider(0, 6), 4.0e4, 1.0e4, 0.5);
    CHECK_THROWS_AS(compose_stages(s1, bad), InputError);
    CHECK_THROWS_AS(stage1_schedule(1.0, 2.0, 0.5), InputError);
}
