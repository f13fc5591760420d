#pragma once

#include <numbers>
#include <string_view>

namespace dipoleforge {

// CODATA 2018.
struct PhysConsts {
    static constexpr double electron_mass = 9.1093837015e-31;      // kg
    static constexpr double elementary_charge = 1.602176634e-19;   // C
    static constexpr double hbar = 1.054571817e-34;                // J s
    static constexpr double bohr_magneton = 9.2740100783e-24;      // J/T
};

inline constexpr double two_pi = 2.0 * std::numbers::pi;

enum class Dimension {
    length,
    time,
    energy,
    frequency,              // angular, rad/s
    electric_field,         // V/m, internal value is e*E (force)
    potential_coefficient,  // V/m^k, internal value is e*a_k (energy per length^k)
    magnetic_gradient,      // T/m, internal value is mu_B*b (energy per length)
};

/// Parses a dimension tag such as "length" or "electric-field".
/// Throws std::invalid_argument for unknown tags.
Dimension parse_dimension(std::string_view tag);

/// Internal scaling used by every numerical kernel: lengths in units of
/// `length_unit`, masses in electron masses and hbar = 1, so the kinetic
/// operator is -1/2 d^2/dz^2.
class UnitSystem {
public:
    explicit UnitSystem(double length_unit = 1e-6);

    double length_unit() const { return length_unit_; }
    double energy_unit() const { return energy_unit_; }
    double time_unit() const { return time_unit_; }

    /// `order` is only used for Dimension::potential_coefficient (the k in V/m^k).
    double to_internal(double si, Dimension kind, int order = 0) const;
    double from_internal(double value, Dimension kind, int order = 0) const;

private:
    double scale(Dimension kind, int order) const;

    double length_unit_;
    double energy_unit_;
    double time_unit_;
};

/// The micrometre system shared by the library.
const UnitSystem& internal_units();

constexpr double gauss_per_micron_to_tesla_per_metre(double g_per_um) { return g_per_um * 1e-4 / 1e-6; }

/// Harmonic coefficient a2 = m_e omega^2 / (2e) in V/m^2.
double harmonic_coefficient(double omega);

/// Inverse of harmonic_coefficient.
double harmonic_frequency(double a2);

/// Fock-state dipole e*sqrt(hbar/(2 m_e omega)), returned in e*um.
double fock_edm(double omega);

}  // namespace dipoleforge
