#include "doctest.h"

#include <cmath>

#include "dipoleforge/errors.hpp"
#include "dipoleforge/open_system.hpp"
#include "dipoleforge/potential.hpp"

using namespace dipoleforge;

namespace {

const double hbar = PhysConsts::hbar;
const double e = PhysConsts::elementary_charge;

const DipoleTable& demo_table()
{
    static const DipoleTable t = [] {
        const auto family = build_potential(5e-6, two_pi * 300e6);
        return dipole_table(solve_window(family, default_grid(family, 4096), 30, 54), 24);
    }();
    return t;
}

}  // namespace

TEST_CASE("noise spectrum and rate arithmetic")
{
    const NoiseSpec noise;
    CHECK(noise.spectral_density(two_pi * 1e6) == doctest::Approx(1e-12));
    CHECK(noise.spectral_density(two_pi * 2e6) == doctest::Approx(1e-12 * std::pow(0.5, 1.3)));
    const auto tl = two_level_model(two_pi * 59.9e6, 7.16e-6);
    const auto rates = noise_rates(tl, noise);
    const double s = 1e-12 * std::pow(1.0 / 59.9, 1.3);
    const double expected = std::pow(e * 7.16e-6, 2) * s / (2.0 * hbar * hbar);
    CHECK(rates.rates(1, 0) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(rates.rates(0, 1) == rates.rates(1, 0));
    CHECK(rates.rates(0, 0) == 0.0);
    CHECK_THROWS_AS(noise.spectral_density(0.0), InputError);
}

TEST_CASE("transfer time arithmetic")
{
    const double g = spin_motion_coupling(14.0, 7.16e-6);
    CHECK(g == doctest::Approx(PhysConsts::bohr_magneton * 14.0 * 7.16e-6 / hbar));
    CHECK(transfer_time(14.0, 7.16e-6) == doctest::Approx(178.2e-9).epsilon(0.01));
}

TEST_CASE("noiseless two-level readout is exact")
{
    const auto tl = two_level_model(two_pi * 59.9e6, 7.16e-6);
    for (double phi_b : {0.0, 0.7, 2.0}) {
        const auto r = readout_transfer(tl, no_noise(tl), 14.0, phi_b);
        CHECK(r.f_plus > 0.999);
        CHECK(r.f_minus > 0.999);
        CHECK(r.hygiene.ok());
    }
    // sign of the rotation: the branches end in orthogonal spin states
    const double wrong = readout_fidelity(tl, no_noise(tl), 14.0, 0.0, MotionalBranch::up_phi) +
                         readout_fidelity(tl, no_noise(tl), 14.0, 0.0, MotionalBranch::down_phi);
    CHECK(wrong == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("lab frame agrees with the rotating frame for a weak drive")
{
    const auto tl = two_level_model(two_pi * 59.9e6, 7.16e-6);
    MasterOptions lab;
    lab.frame = Frame::lab;
    const auto r = readout_transfer(tl, no_noise(tl), 1.0, 0.0, lab);
    CHECK(r.f_avg > 0.999);
}

TEST_CASE("resonant Rabi oscillation in the sensing measurement")
{
    const auto tl = two_level_model(two_pi * 59.9e6, 7.16e-6);
    const double field = 1e-3;
    const double rabi = e * field * 7.16e-6 / hbar;
    for (double theta : {0.3, 1.0, 2.5}) {
        const auto r = sense(tl, no_noise(tl), field, 0.4, theta / rabi);
        CHECK(r.p == doctest::Approx(0.5 * (1.0 + std::sin(theta))).epsilon(1e-6));
        CHECK(r.leakage < 1e-12);
    }
}

TEST_CASE("noiseless susceptibility is linear in time")
{
    const auto tl = two_level_model(two_pi * 59.9e6, 7.16e-6);
    const auto c = susceptibility(tl, no_noise(tl), {0.5e-6, 1e-6}, 1e-6);
    CHECK(c.numeric[1] == doctest::Approx(5.44e3).epsilon(0.02));
    CHECK(c.numeric[1] == doctest::Approx(ideal_susceptibility(7.16, 1e-6)).epsilon(0.01));
    CHECK(c.numeric[1] / c.numeric[0] == doctest::Approx(2.0).epsilon(0.01));
    CHECK_THROWS_AS(susceptibility(tl, no_noise(tl), {1e-6}, 1.0), Refusal);
}

TEST_CASE("noisy susceptibility turns over")
{
    const auto tl = two_level_model(two_pi * 59.9e6, 7.16e-6);
    std::vector<double> times;
    for (double t = 0.2e-6; t < 16e-6; t *= 1.5) times.push_back(t);
    const auto c = susceptibility(tl, noise_rates(tl, NoiseSpec{}), times, 1e-7);
    CHECK(c.interior_maximum());
    CHECK(c.gamma_fit > 0.0);
    CHECK(c.hygiene.ok());
    CHECK(c.numeric.front() > ideal_susceptibility(3.0, times.front()));
}

TEST_CASE("truncated model from the demo spectrum")
{
    const auto& t = demo_table();
    const auto m = truncated_model(t, 35, 49, 42, 43);
    CHECK(m.n == 43);
    CHECK(m.n_prime == 42);
    CHECK(m.omega_tls() > 0.0);
    CHECK((m.z - m.z.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(truncated_model(t, 40, 49, 43, 42), InputError);
    CHECK_THROWS_AS(truncated_model(t, 35, 45, 43, 42), InputError);
    CHECK_NOTHROW(truncated_model(t, 42, 43, 43, 42));
    CHECK_THROWS_AS(truncated_model(dipole_table(solve_window(build_potential(5e-6, two_pi * 300e6),
                                                              default_grid(build_potential(5e-6, two_pi * 300e6), 4096),
                                                              30, 54),
                                                 2),
                                    35, 49, 43, 42),
                    InputError);
}

TEST_CASE("master equation keeps the density matrix physical")
{
    const auto m = truncated_model(demo_table(), 35, 49, 43, 42);
    const auto lindblad = noise_rates(m, NoiseSpec{}).scaled(100.0);
    const auto r = readout_transfer(m, lindblad, 50.0, 0.0);
    CHECK(r.hygiene.ok());
    CHECK(r.hygiene.max_trace_error < 1e-8);
    CHECK(r.hygiene.min_eigenvalue > -1e-9);
    CHECK(r.f_avg < 1.0);
    const auto s = sense(m, lindblad, 1e-3, 0.0, 2e-6);
    CHECK(s.hygiene.ok());
    CHECK(s.leakage > 0.0);
}

TEST_CASE("explicit dt above the gate is refused")
{
    const auto tl = two_level_model(two_pi * 59.9e6, 7.16e-6);
    MasterOptions opt;
    opt.frame = Frame::lab;
    opt.dt = 1e-9;
    CHECK_THROWS_AS(readout_transfer(tl, no_noise(tl), 14.0, 0.0, opt), Refusal);
    CHECK_THROWS_AS(parse_frame("rotating"), InputError);
}
