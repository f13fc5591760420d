#include "dipoleforge/potential.hpp"

#include <algorithm>
#include <cmath>

#include "dipoleforge/errors.hpp"

namespace dipoleforge {

PotentialSpec build_potential(double d, double omega_h_prime, double a2)
{
    if (!(d > 0.0)) throw InputError("d_m", "must be positive");
    if (!(omega_h_prime > 0.0)) throw InputError("omega_h_prime_rad_s", "must be positive");
    if (!(a2 >= 0.0)) throw InputError("a2_V_per_m2", "must be non-negative");

    const double a2_prime = harmonic_coefficient(omega_h_prime);
    PotentialSpec spec;
    spec.a2 = a2;
    spec.a3 = 2.0 * a2_prime / (3.0 * d);
    spec.a4 = 3.0 * spec.a3 / (4.0 * d);
    spec.d = d;
    spec.omega_h_prime = omega_h_prime;
    return spec;
}

CubicQuarticParameters invert_cubic_quartic(double a3, double a4)
{
    if (!(a3 > 0.0) || !(a4 > 0.0)) throw std::invalid_argument("invert_cubic_quartic: a3 and a4 must be positive");
    const double d = 3.0 * a3 / (4.0 * a4);
    const double a2_prime = 1.5 * a3 * d;
    return {d, harmonic_frequency(a2_prime)};
}

double eval_potential(const PotentialSpec& s, double z) { return z * z * (s.a2 + z * (s.a3 + z * s.a4)); }

double potential_slope(const PotentialSpec& s, double z) { return z * (2.0 * s.a2 + z * (3.0 * s.a3 + 4.0 * s.a4 * z)); }

double potential_curvature(const PotentialSpec& s, double z) { return 2.0 * s.a2 + z * (6.0 * s.a3 + 12.0 * s.a4 * z); }

RadialMoments radial_moments(const RadialSpec& radial)
{
    if (!(radial.omega_x > 0.0) || !(radial.omega_y > 0.0))
        throw InputError("radial", "secular frequencies must be positive");
    const double x2 = PhysConsts::hbar / (2.0 * PhysConsts::electron_mass * radial.omega_x);
    const double y2 = PhysConsts::hbar / (2.0 * PhysConsts::electron_mass * radial.omega_y);
    // Gaussian: <x^4> = 3<x^2>^2
    return {x2 + y2, 3.0 * x2 * x2 + 2.0 * x2 * y2 + 3.0 * y2 * y2};
}

double radial_corrected_potential(const PotentialSpec& spec, const RadialSpec& radial, double z)
{
    return axial_polynomial(spec, radial)(z);
}

std::array<double, 5> AxialPolynomial::internal_energy_coefficients() const
{
    std::array<double, 5> out{};
    const auto& u = internal_units();
    for (int k = 0; k < 5; ++k) out[k] = u.to_internal(c[k], Dimension::potential_coefficient, k);
    return out;
}

AxialPolynomial axial_polynomial(const PotentialSpec& spec) { return {{0.0, 0.0, spec.a2, spec.a3, spec.a4}}; }

AxialPolynomial axial_polynomial(const PotentialSpec& spec, const RadialSpec& radial)
{
    const auto m = radial_moments(radial);
    // z^3 -> z^3 - (3/2) z rho^2,  z^4 -> z^4 - 3 z^2 rho^2 + (3/8) rho^4
    AxialPolynomial p = axial_polynomial(spec);
    p.c[0] += 0.375 * spec.a4 * m.rho4;
    p.c[1] += -1.5 * spec.a3 * m.rho2;
    p.c[2] += -3.0 * spec.a4 * m.rho2;
    return p;
}

namespace {

StationaryKind classify(const PotentialSpec& spec, double z)
{
    const double scale = std::abs(2.0 * spec.a2) + std::abs(6.0 * spec.a3 * z) + std::abs(12.0 * spec.a4 * z * z);
    const double curv = potential_curvature(spec, z);
    if (scale == 0.0 || std::abs(curv) <= 1e-12 * scale) return StationaryKind::saddle;
    return curv > 0.0 ? StationaryKind::minimum : StationaryKind::maximum;
}

}  // namespace

std::vector<StationaryPoint> stationary_points(const PotentialSpec& spec)
{
    // dPhi/dz = z (2 a2 + 3 a3 z + 4 a4 z^2)
    std::vector<double> roots{0.0};
    const double qa = 4.0 * spec.a4, qb = 3.0 * spec.a3, qc = 2.0 * spec.a2;
    if (qa != 0.0) {
        const double disc = qb * qb - 4.0 * qa * qc;
        if (disc >= 0.0) {
            // numerically stable pair
            const double sq = std::sqrt(disc);
            const double q = -0.5 * (qb + std::copysign(sq, qb));
            double r1 = q / qa;
            double r2 = (q != 0.0) ? qc / q : r1;
            if (qc == 0.0) r2 = 0.0;
            roots.push_back(r1);
            if (disc > 0.0) roots.push_back(r2);
        }
    } else if (qb != 0.0) {
        roots.push_back(-qc / qb);
    }
    std::sort(roots.begin(), roots.end());
    std::vector<StationaryPoint> out;
    for (double r : roots) {
        if (!out.empty() && std::abs(out.back().z - r) <= 1e-14 * std::max(1.0, std::abs(r))) {
            out.back().kind = StationaryKind::saddle;  // double root
            continue;
        }
        out.push_back({r, classify(spec, r)});
    }
    return out;
}

std::optional<double> barrier_position(const PotentialSpec& spec)
{
    const auto points = stationary_points(spec);
    if (points.size() != 3) return std::nullopt;
    if (points[1].kind != StationaryKind::maximum) return std::nullopt;
    return points[1].z;
}

double double_well_threshold(const PotentialSpec& spec)
{
    if (!(spec.a4 > 0.0)) throw std::invalid_argument("double_well_threshold: a4 must be positive");
    return 9.0 * spec.a3 * spec.a3 / (32.0 * spec.a4);
}

}  // namespace dipoleforge
