#pragma once

#include <array>
#include <optional>
#include <vector>

#include "dipoleforge/units.hpp"

namespace dipoleforge {

/// Axial potential a2 z^2 + a3 z^3 + a4 z^4 (volts, z in metres).
struct PotentialSpec {
    double a2 = 0.0;             // V/m^2
    double a3 = 0.0;             // V/m^3
    double a4 = 0.0;             // V/m^4
    double d = 0.0;              // m, separation of the two stationary points at a2 = 0
    double omega_h_prime = 0.0;  // rad/s, harmonic frequency of the deep well at a2 = 0

    PotentialSpec with_a2(double value) const
    {
        PotentialSpec out = *this;
        out.a2 = value;
        return out;
    }

    bool operator==(const PotentialSpec&) const = default;
};

/// Secular radial frequencies of the pseudopotential ground state.
struct RadialSpec {
    double omega_x = two_pi * 1e9;
    double omega_y = two_pi * 1e9;
};

/// Builds a3 = 2 a2'/(3d), a4 = 3 a3/(4d) with a2' = m_e omega_h'^2/(2e).
PotentialSpec build_potential(double d, double omega_h_prime, double a2 = 0.0);

/// Recovers (d, omega_h') from (a3, a4) of a built spec.
struct CubicQuarticParameters {
    double d;
    double omega_h_prime;
};
CubicQuarticParameters invert_cubic_quartic(double a3, double a4);

double eval_potential(const PotentialSpec& spec, double z);
double potential_slope(const PotentialSpec& spec, double z);
double potential_curvature(const PotentialSpec& spec, double z);

/// Radial Gaussian moments <rho^2> and <rho^4> in m^2 and m^4.
struct RadialMoments {
    double rho2;
    double rho4;
};
RadialMoments radial_moments(const RadialSpec& radial);

/// eval_potential plus the Gaussian average over x, y of the harmonic
/// completions of z^3 and z^4. The pseudopotential itself carries no z
/// dependence in this model, so only the DC terms contribute.
double radial_corrected_potential(const PotentialSpec& spec, const RadialSpec& radial, double z);

/// General quartic c0 + c1 z + ... + c4 z^4 in SI (V/m^k). Both the ideal
/// and the radially corrected potentials are of this form.
struct AxialPolynomial {
    std::array<double, 5> c{};

    double operator()(double z) const { return c[0] + z * (c[1] + z * (c[2] + z * (c[3] + z * c[4]))); }
    double slope(double z) const { return c[1] + z * (2.0 * c[2] + z * (3.0 * c[3] + z * 4.0 * c[4])); }
    double curvature(double z) const { return 2.0 * c[2] + z * (6.0 * c[3] + z * 12.0 * c[4]); }

    /// Electron potential energy coefficients in internal units (energy / um^k).
    std::array<double, 5> internal_energy_coefficients() const;
};

AxialPolynomial axial_polynomial(const PotentialSpec& spec);
AxialPolynomial axial_polynomial(const PotentialSpec& spec, const RadialSpec& radial);

enum class StationaryKind { minimum, maximum, saddle };

struct StationaryPoint {
    double z;
    StationaryKind kind;
};

/// Real roots of dPhi/dz ordered by z. For a2 = 0 the flat point at z = 0 is
/// reported as a saddle.
std::vector<StationaryPoint> stationary_points(const PotentialSpec& spec);

/// Position of the barrier maximum separating the two wells, if there is one.
std::optional<double> barrier_position(const PotentialSpec& spec);

/// Largest a2 for which the double well exists (discriminant of dPhi/dz / z).
double double_well_threshold(const PotentialSpec& spec);

}  // namespace dipoleforge
