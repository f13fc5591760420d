#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "dipoleforge/eigensolver.hpp"

namespace dipoleforge {

/// a2(t) sampled on a time grid, linearly interpolated in between.
struct Schedule {
    std::vector<double> times;  // s, strictly increasing from 0
    std::vector<double> a2;     // V/m^2
    std::vector<int> stage;     // 1 or 2 per sample
    double t_m = 0.0;           // stage boundary, s
    double epsilon = 0.0;

    double duration() const { return times.empty() ? 0.0 : times.back() - times.front(); }
    double a2_at(double t) const;
    bool empty() const { return times.empty(); }
    /// Strictly increasing times; with `monotone`, strictly decreasing a2.
    void validate(bool monotone = true) const;
    /// Same path in a2, time axis stretched to `duration` (epsilon rescaled).
    Schedule rescaled(double duration) const;
};

/// Closed-form stage I of a harmonic right well:
/// a2(t) = [8 sqrt(e/m_e) eps t + a2_0^(-1/2)]^(-2).
double stage1_closed_form(double a2_t0, double epsilon, double t);

/// Time at which the closed form reaches a2 (inverse of stage1_closed_form).
double stage1_time_to(double a2_t0, double epsilon, double a2);

/// Closed-form schedule from a2_t0 to a2_end sampled at `samples` points.
Schedule stage1_schedule(double a2_t0, double a2_end, double epsilon, std::size_t samples = 4001);

/// min over i != ref in the band of |(E_ref - E_i)^2 / <ref| dH/da2 |i>| with
/// dH/da2 = e z^2. Units J (V/m^2).
class SpectrumProvider {
public:
    virtual ~SpectrumProvider() = default;
    virtual double adiabatic_bound(double a2) const = 0;
    virtual std::string mode() const = 0;
};

/// Analytic harmonic right well of frequency sqrt(2 e a2 / m_e).
class HarmonicProvider : public SpectrumProvider {
public:
    explicit HarmonicProvider(std::size_t ref = 0, std::size_t band = 6) : ref_(ref), band_(band) {}
    double adiabatic_bound(double a2) const override;
    std::string mode() const override { return "right-well-harmonic"; }

private:
    std::size_t ref_, band_;
};

/// Eigenstates of the right well alone: the domain is cut by a hard wall at
/// the barrier maximum (the whole trap when there is no barrier).
class RightWellProvider : public SpectrumProvider {
public:
    RightWellProvider(PotentialSpec family, std::size_t n_points, std::size_t ref = 0, std::size_t band = 6);
    double adiabatic_bound(double a2) const override;
    std::string mode() const override { return "right-well"; }
    Grid grid_at(double a2) const;

private:
    PotentialSpec family_;
    std::size_t n_points_, ref_, band_;
};

/// Global eigenstates of the full potential; `ref` is a fixed global index.
class FullPotentialProvider : public SpectrumProvider {
public:
    FullPotentialProvider(PotentialSpec family, Grid grid, std::size_t ref, std::size_t band = 6);
    double adiabatic_bound(double a2) const override;
    std::string mode() const override { return "full-potential"; }

private:
    PotentialSpec family_;
    Grid grid_;
    std::size_t ref_, band_;
};

struct FaquadOptions {
    double max_relative_step = 0.002;  // |da2| per step relative to a2
    double floor_fraction = 0.01;      // relative steps use max(a2, floor_fraction * a2_start)
    double dip_tolerance = 0.2;        // halve the step when the bound varies more than this within it
    std::size_t max_halvings = 12;
};

/// Integrates dt/da2 = -hbar / (eps * bound(a2)) by RK4 in a2 from a2_start down to a2_end.
Schedule faquad_schedule(const SpectrumProvider& provider, double a2_start, double a2_end, double epsilon,
                         const FaquadOptions& options = {});

/// Concatenation on a common clock; t_m is the junction.
Schedule compose_stages(const Schedule& stage1, const Schedule& stage2);

}  // namespace dipoleforge
