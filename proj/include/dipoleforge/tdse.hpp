#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <vector>

#include "dipoleforge/eigensolver.hpp"
#include "dipoleforge/faquad.hpp"
#include "dipoleforge/grap_scan.hpp"

namespace dipoleforge {

/// Wavefunction on a grid; amplitudes in um^-1/2.
struct WaveState {
    Grid grid;
    std::vector<std::complex<double>> psi;
    double time = 0.0;  // s

    double norm() const;  // trapezoid rule
};

WaveState make_state(const Grid& grid, const std::vector<double>& amplitudes, double time = 0.0);

/// <a|b> under the trapezoid rule.
std::complex<double> overlap(const WaveState& a, const std::vector<double>& b);
double fidelity(const WaveState& state, const std::vector<double>& target);

/// a2 as a function of time (s -> V/m^2).
using A2Path = std::function<double(double)>;

struct PropagateOptions {
    double norm_tolerance = 1e-6;
    // Half-width (J) of the occupied energy band around the running <H>. Zero
    // derives it from the initial energy spread (six standard deviations).
    double band_halfwidth = 0.0;
    bool dt_gate = true;
    std::size_t reference_interval = 64;  // steps between gauge updates
    std::function<void(const WaveState&, double a2)> observer;
    std::size_t observer_stride = 0;
};

/// Crank-Nicolson propagation from initial.time to t_end under
/// H = p^2/2m + e Phi(z; a2(t)), a2 sampled at the half step. The energy
/// reference is moved to the running <H> (a global phase only).
WaveState propagate(const WaveState& initial, const PotentialSpec& family, const A2Path& a2_of_t, double t_end,
                    double dt, const PropagateOptions& options = {});
WaveState propagate(const WaveState& initial, const PotentialSpec& family, const Schedule& schedule, double dt,
                    const PropagateOptions& options = {});

/// <H> and <H^2> - <H>^2 in J and J^2.
std::pair<double, double> energy_moments(const WaveState& state, const PotentialSpec& family, double a2);
double position_expectation(const WaveState& state);  // m

struct FidelityScan {
    enum class Axis { t1, t2 } axis = Axis::t1;
    std::vector<double> values;     // s
    std::vector<double> fidelities;
    double fixed_t1 = 0.0;          // s, recorded for t2 scans
    double fixed_t2 = 0.0;          // s, recorded for t1 scans
    std::size_t argmax() const;
};

/// Two-stage initialization: stage I follows the right-well closed form from
/// a2_start to a2_m in t1, stage II is a full-potential FAQUAD schedule on
/// `target_index` from a2_m to a2_end stretched to t2.
struct InitProtocol {
    PotentialSpec family;
    Grid grid;
    double a2_start = 0.0;
    double a2_m = 0.0;
    double a2_end = 0.0;
    std::size_t target_index = 0;
    double dt = 0.0;                 // s
    double stage2_epsilon = 0.05;    // shape only; rescaled to t2
    std::size_t faquad_band = 6;

    void validate() const;
};

/// Picks a2_m and the target index by following the right-well ground
/// branch down the GRAP list: a GRAP on the tracked branch whose gap is below
/// 1/t1_scale is crossed diabatically (the branch index moves up by one); the
/// first one above it stops the walk. a2_m sits halfway between the last
/// diabatic GRAP and the first adiabatic one.
struct InitChoice {
    double a2_m;
    std::size_t target_index;
    std::size_t crossed;
};
InitChoice choose_stage_boundary(const std::vector<Grap>& graps, double t1_scale);

/// Stage II path shape (FAQUAD at stage2_epsilon); reusable across t1/t2 values.
Schedule stage2_shape(const InitProtocol& protocol);

Schedule init_schedule(const InitProtocol& protocol, double t1, double t2, const Schedule* shape = nullptr);

/// Energy band (J) the initialization state may occupy: (target + 4) quanta of omega_h'.
double init_band(const InitProtocol& protocol);
/// 0.9 of the largest step the dt gate accepts for that band.
double default_init_dt(const InitProtocol& protocol);

/// 1D restriction of the initialization fidelity: |<psi_target(a2_end)|psi(t_f)>|^2,
/// starting from the ground state at a2_start.
double initialization_fidelity(const InitProtocol& protocol, double t1, double t2,
                               const Schedule* shape = nullptr);
double initialization_fidelity(const InitProtocol& protocol, const Schedule& schedule);

FidelityScan fidelity_scan(const InitProtocol& protocol, FidelityScan::Axis axis, const std::vector<double>& values,
                           double fixed_other, unsigned jobs = 1);

}  // namespace dipoleforge
