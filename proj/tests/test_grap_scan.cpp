#include "doctest.h"

#include <cmath>
#include <stdexcept>

#include "dipoleforge/errors.hpp"
#include "dipoleforge/grap_scan.hpp"
#include "dipoleforge/potential.hpp"

using namespace dipoleforge;

namespace {

const double hbar = PhysConsts::hbar;

// Two hyperbolic avoided crossings between three levels plus a spectator.
std::vector<double> column(double a2, double a_star, double b_star, double delta_a, double delta_b, double slope)
{
    const double x = slope * (a2 - a_star);
    const double y = slope * (a2 - b_star);
    const double lower = -std::sqrt(x * x + 0.25 * delta_a * delta_a);
    const double upper = std::sqrt(x * x + 0.25 * delta_a * delta_a);
    const double top = 1e9 + std::sqrt(y * y + 0.25 * delta_b * delta_b);
    const double top_low = 1e9 - std::sqrt(y * y + 0.25 * delta_b * delta_b);
    return {hbar * (lower - 5e9), hbar * (upper - 5e9), hbar * top_low, hbar * top};
}

}  // namespace

TEST_CASE("synthetic avoided crossing is located and measured")
{
    const double a_star = 1.2345e4, delta = two_pi * 1e5, slope = 2.0e4;
    std::vector<double> a2;
    std::vector<std::vector<double>> e;
    for (int k = 0; k <= 60; ++k) {
        const double v = 1.0e4 + 50.0 * k;
        a2.push_back(v);
        auto c = column(v, a_star, 1e9, delta, two_pi * 1e8, slope);
        e.push_back({c[0], c[1]});
    }
    const auto graps = detect_graps(make_scan(0, a2, e));
    REQUIRE(graps.size() == 1);
    const auto& g = graps.front();
    CHECK(g.lower_index == 0);
    const double width = delta / (2.0 * slope);
    CHECK(std::abs(g.a2_star - a_star) < 0.01 * width);
    CHECK(g.gap == doctest::Approx(delta).epsilon(0.01));
    CHECK(g.width() == doctest::Approx(width).epsilon(0.01));
}

TEST_CASE("monotone gaps give no GRAP")
{
    std::vector<double> a2;
    std::vector<std::vector<double>> e;
    for (int k = 0; k <= 40; ++k) {
        const double v = 1.0 + 0.1 * k;
        a2.push_back(v);
        e.push_back({0.0, hbar * two_pi * 1e6 * (1.0 + v), hbar * two_pi * 1e6 * (3.0 + 2.0 * v)});
    }
    CHECK(detect_graps(make_scan(3, a2, e)).empty());
}

TEST_CASE("two crossings come out ordered by a2")
{
    const double a = 2.0e4, b = 1.5e4, slope = 2.0e4;
    std::vector<double> a2;
    std::vector<std::vector<double>> e;
    for (int k = 0; k <= 200; ++k) {
        const double v = 2.5e4 - 75.0 * k;  // sweep downwards
        a2.push_back(v);
        e.push_back(column(v, a, b, two_pi * 2e5, two_pi * 4e5, slope));
    }
    const auto graps = detect_graps(make_scan(10, a2, e));
    REQUIRE(graps.size() == 2);
    CHECK(graps[0].a2_star < graps[1].a2_star);
    CHECK(graps[0].lower_index == 12);
    CHECK(graps[1].lower_index == 10);
    CHECK(graps[0].gap == doctest::Approx(two_pi * 4e5).epsilon(0.01));
}

TEST_CASE("gap ceiling filters wide anticrossings")
{
    std::vector<double> a2;
    std::vector<std::vector<double>> e;
    for (int k = 0; k <= 60; ++k) {
        const double v = 1.0e4 + 50.0 * k;
        a2.push_back(v);
        auto c = column(v, 1.2e4, 1e9, two_pi * 50e6, two_pi * 1e8, 2.0e7);
        e.push_back({c[0], c[1]});
    }
    CHECK(detect_graps(make_scan(0, a2, e)).empty());
    GrapOptions loose;
    loose.gap_ceiling = two_pi * 100e6;
    CHECK(detect_graps(make_scan(0, a2, e), loose).size() == 1);
}

TEST_CASE("demo trap shows the first right-well crossings")
{
    const double omega = two_pi * 300e6;
    const auto family = build_potential(5e-6, omega);
    const double a2p = harmonic_coefficient(omega);
    ScanOptions opts;
    opts.branch_map = false;
    const auto scan = scan_a2(family, 0.230 * a2p, 0.214 * a2p, 24, 0, 6, default_grid(family, 2048), opts);
    CHECK_NOTHROW(scan.validate());
    const auto graps = detect_graps(scan);
    const Grap* first = nullptr;
    const Grap* second = nullptr;
    for (const auto& g : graps) {
        if (g.lower_index == 0) first = &g;
        if (g.lower_index == 1 && g.a2_star < 0.22 * a2p) second = &g;
    }
    REQUIRE(first != nullptr);
    REQUIRE(second != nullptr);
    CHECK(first->a2_star / a2p == doctest::Approx(0.2222).epsilon(2e-3));
    CHECK(second->a2_star / a2p == doctest::Approx(0.2170).epsilon(2e-3));
    CHECK(first->gap < second->gap);
    CHECK(first->gap < two_pi * 0.01e6);
}

TEST_CASE("scan input checks")
{
    CHECK_THROWS_AS(make_scan(0, {1.0, 2.0}, {{0.0, 1.0}}), std::invalid_argument);
    CHECK_THROWS_AS(make_scan(0, {1.0, 2.0}, {{0.0, 1.0}, {0.0}}), std::invalid_argument);
    CHECK_THROWS_AS(make_scan(0, {1.0}, {{1.0, 0.0}}), std::invalid_argument);
}
