#include "dipoleforge/units.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dipoleforge {

Dimension parse_dimension(std::string_view tag)
{
    if (tag == "length") return Dimension::length;
    if (tag == "time") return Dimension::time;
    if (tag == "energy") return Dimension::energy;
    if (tag == "frequency") return Dimension::frequency;
    if (tag == "electric-field") return Dimension::electric_field;
    if (tag == "potential-coefficient") return Dimension::potential_coefficient;
    if (tag == "magnetic-gradient") return Dimension::magnetic_gradient;
    throw std::invalid_argument("unknown dimension tag '" + std::string(tag) + "'");
}

UnitSystem::UnitSystem(double length_unit)
    : length_unit_(length_unit),
      energy_unit_(PhysConsts::hbar * PhysConsts::hbar / (PhysConsts::electron_mass * length_unit * length_unit)),
      time_unit_(PhysConsts::hbar / energy_unit_)
{
    if (!(length_unit > 0.0)) throw std::invalid_argument("length_unit must be positive");
}

double UnitSystem::scale(Dimension kind, int order) const
{
    switch (kind) {
    case Dimension::length: return 1.0 / length_unit_;
    case Dimension::time: return 1.0 / time_unit_;
    case Dimension::energy: return 1.0 / energy_unit_;
    case Dimension::frequency: return time_unit_;
    case Dimension::electric_field: return PhysConsts::elementary_charge * length_unit_ / energy_unit_;
    case Dimension::potential_coefficient:
        if (order < 0) throw std::invalid_argument("potential coefficient order must be >= 0");
        return PhysConsts::elementary_charge * std::pow(length_unit_, order) / energy_unit_;
    case Dimension::magnetic_gradient: return PhysConsts::bohr_magneton * length_unit_ / energy_unit_;
    }
    throw std::invalid_argument("unknown dimension");
}

double UnitSystem::to_internal(double si, Dimension kind, int order) const { return si * scale(kind, order); }

double UnitSystem::from_internal(double value, Dimension kind, int order) const { return value / scale(kind, order); }

const UnitSystem& internal_units()
{
    static const UnitSystem units(1e-6);
    return units;
}

double harmonic_coefficient(double omega)
{
    return PhysConsts::electron_mass * omega * omega / (2.0 * PhysConsts::elementary_charge);
}

double harmonic_frequency(double a2)
{
    if (a2 < 0.0) throw std::invalid_argument("harmonic_frequency: negative a2");
    return std::sqrt(2.0 * PhysConsts::elementary_charge * a2 / PhysConsts::electron_mass);
}

double fock_edm(double omega)
{
    if (!(omega > 0.0)) throw std::invalid_argument("fock_edm: omega must be positive");
    return std::sqrt(PhysConsts::hbar / (2.0 * PhysConsts::electron_mass * omega)) / 1e-6;
}

}  // namespace dipoleforge
