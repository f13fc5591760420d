#include "doctest.h"

#include <cmath>

#include "dipoleforge/eigensolver.hpp"
#include "dipoleforge/errors.hpp"

using namespace dipoleforge;

namespace {

const double omega_300 = two_pi * 300e6;

PotentialSpec harmonic_spec(double omega)
{
    return {harmonic_coefficient(omega), 0.0, 0.0, 1e-6, omega};
}

const EigenWindow& harmonic_window()
{
    static const EigenWindow w = solve_window(harmonic_spec(omega_300), Grid{-2.5e-6, 2.5e-6, 1 << 16}, 0, 22);
    return w;
}

}  // namespace

TEST_CASE("tridiagonal bisection against a closed form")
{
    // Discrete Laplacian: eigenvalues 2 - 2 cos(k pi / (n+1)).
    const std::size_t n = 200;
    SymTridiagonal t{std::vector<double>(n, 2.0), std::vector<double>(n - 1, -1.0)};
    const auto ev = eigenvalues_by_index(t, 10, 30, 3);
    for (std::size_t k = 0; k < ev.size(); ++k) {
        const double exact = 2.0 - 2.0 * std::cos(static_cast<double>(k + 11) * std::numbers::pi / (n + 1));
        CHECK(ev[k] == doctest::Approx(exact).epsilon(1e-13));
    }
    CHECK(sturm_count(t, 0.0) == 0);
    CHECK(sturm_count(t, 4.0) == n);
}

TEST_CASE("harmonic oracle")
{
    const auto& w = harmonic_window();
    CHECK(w.flagged.empty());
    CHECK(w.node_audit_failures.empty());
    for (std::size_t n = 0; n <= 20; ++n) {
        const double exact = PhysConsts::hbar * omega_300 * (static_cast<double>(n) + 0.5);
        CHECK(std::abs(w.energy(n) / exact - 1.0) < 1e-6);
        CHECK(w.residual_norms[n] < 1e-8);
    }
    const auto table = dipole_table(w, 2);
    const double z01 = std::sqrt(PhysConsts::hbar / (2 * PhysConsts::electron_mass * omega_300));
    CHECK(std::abs(std::abs(table.z(0, 1)) / z01 - 1.0) < 1e-6);
    for (std::size_t n = 0; n + 2 <= 20; ++n) {
        CHECK(std::abs(table.z(n, n + 2)) / 1e-6 < 1e-8);
        CHECK(std::abs(std::abs(table.z(n, n + 1)) / (z01 * std::sqrt(n + 1.0)) - 1.0) < 1e-5);
    }
    CHECK(orthonormality_error(w) < 1e-8);
    CHECK(w.orthonormality_error < 1e-8);
}

TEST_CASE("dipole table symmetry and units")
{
    const auto table = dipole_table(harmonic_window(), 2);
    CHECK(table.z(3, 4) == table.z(4, 3));
    CHECK(table.mu(3, 4) == doctest::Approx(table.z(3, 4) / 1e-6));
    CHECK(table.omega(4, 3) == doctest::Approx(omega_300).epsilon(1e-6));
    CHECK_FALSE(table.available(0, 5));
    CHECK_THROWS(table.z(0, 5));
}

TEST_CASE("streamed band matches stored wavefunctions")
{
    SolveOptions opt;
    opt.keep_wavefunctions = false;
    opt.dipole_band = 2;
    const auto streamed = solve_window(harmonic_spec(omega_300), Grid{-2.5e-6, 2.5e-6, 1 << 14}, 3, 12, opt);
    const auto stored = solve_window(harmonic_spec(omega_300), Grid{-2.5e-6, 2.5e-6, 1 << 14}, 3, 12);
    const auto a = dipole_table(streamed, 2);
    const auto b = dipole_table(stored, 2);
    for (std::size_t n = 3; n < 12; ++n) CHECK(a.z(n, n + 1) == doctest::Approx(b.z(n, n + 1)).epsilon(1e-10));
    CHECK_FALSE(streamed.has_wavefunctions());
}

TEST_CASE("harmonic ladder has no isolated pair")
{
    const auto table = dipole_table(harmonic_window(), 2);
    CHECK(effective_detuning(table, 10, 9, 2) < 1e-4 * omega_300);
    const auto curve = transition_curve(harmonic_window());
    REQUIRE(curve.size() == 22);
    for (const auto& r : curve) CHECK(r.omega == doctest::Approx(omega_300).epsilon(1e-5));
    CHECK(curve[8].edm == doctest::Approx(fock_edm(omega_300) * 3.0).epsilon(1e-5));
}

TEST_CASE("Thomas-Reiche-Kuhn sum rule")
{
    const auto& w = harmonic_window();
    const auto table = dipole_table(w, 4);
    const std::size_t n = 6;
    double sum = 0.0;
    for (std::size_t j = n - 4; j <= n + 4; ++j)
        if (j != n) sum += (w.energy(j) - w.energy(n)) * table.z(n, j) * table.z(n, j);
    const double expected = PhysConsts::hbar * PhysConsts::hbar / (2 * PhysConsts::electron_mass);
    CHECK(sum == doctest::Approx(expected).epsilon(0.02));
}

TEST_CASE("resolution gate refuses coarse grids")
{
    const auto s = build_potential(40e-6, omega_300);
    try {
        solve_window(s, default_grid(s, 4096), 3600, 3601);
        FAIL("expected refusal");
    } catch (const Refusal& r) {
        CHECK(r.gate() == "resolution");
        CHECK(r.hint().find("n_points") != std::string::npos);
    }
    CHECK_THROWS_AS(solve_window(s, default_grid(s, 4096), 5, 2), InputError);
}

TEST_CASE("double-well window")
{
    const auto s = build_potential(5e-6, omega_300);
    const Grid g = default_grid(s, 4096);
    const auto w = solve_window(s, g, 0, 60);
    CHECK(w.flagged.empty());
    CHECK(w.node_audit_failures.empty());
    for (std::size_t k = 1; k < w.size(); ++k) CHECK(w.energies[k] > w.energies[k - 1]);
    // the three-point kinetic term converges from below: refinement never lowers an energy
    const auto fine = solve_window(s, g.refined(), 40, 45);
    const double floor = 1e-8 * internal_units().energy_unit();
    for (std::size_t n = 40; n <= 45; ++n)
        CHECK(fine.energy(n) >= w.energy(n) - 1e-8 * std::max(std::abs(w.energy(n)), floor));
    // deterministic
    const auto again = solve_window(s, g, 0, 60);
    CHECK(again.energies == w.energies);
}
