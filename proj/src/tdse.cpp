#include "dipoleforge/tdse.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include "dipoleforge/errors.hpp"

namespace dipoleforge {

namespace {

using cplx = std::complex<double>;

double um(double metres) { return metres / internal_units().length_unit(); }

// Potential split as V0(z) + k2(a2) z^2, everything in internal units.
struct SplitPotential {
    std::vector<double> v0, z2;
    double h;

    SplitPotential(const PotentialSpec& family, const Grid& grid)
        : v0(sample_potential_energy(axial_polynomial(family.with_a2(0.0)), grid)), z2(grid.n_points),
          h(um(grid.spacing()))
    {
        const double z0 = um(grid.z_min);
        for (std::size_t i = 0; i < z2.size(); ++i) {
            const double z = z0 + h * static_cast<double>(i);
            z2[i] = z * z;
        }
    }

    static double k2(double a2) { return internal_units().to_internal(a2, Dimension::potential_coefficient, 2); }

    void apply(const std::vector<cplx>& x, std::vector<cplx>& y, double a2) const
    {
        const std::size_t n = x.size();
        const double kin = 0.5 / (h * h), k = k2(a2);
        for (std::size_t i = 0; i < n; ++i) {
            const cplx left = i > 0 ? x[i] - x[i - 1] : x[i];
            const cplx right = i + 1 < n ? x[i] - x[i + 1] : x[i];
            y[i] = (v0[i] + k * z2[i]) * x[i] + kin * (left + right);
        }
    }

    // <H>, <H^2> in internal units, normalised by the discrete norm.
    std::pair<double, double> moments(const std::vector<cplx>& psi, double a2) const
    {
        std::vector<cplx> hpsi(psi.size());
        apply(psi, hpsi, a2);
        double norm = 0.0, e1 = 0.0, e2 = 0.0;
        for (std::size_t i = 0; i < psi.size(); ++i) {
            norm += std::norm(psi[i]);
            e1 += (std::conj(psi[i]) * hpsi[i]).real();
            e2 += std::norm(hpsi[i]);
        }
        return {e1 / norm, e2 / norm};
    }
};

double discrete_norm(const std::vector<cplx>& psi, double h)
{
    double s = 0.0;
    for (const auto& c : psi) s += std::norm(c);
    return s * h;
}

}  // namespace

double WaveState::norm() const
{
    const double h = um(grid.spacing());
    double s = discrete_norm(psi, h);
    s -= 0.5 * h * (std::norm(psi.front()) + std::norm(psi.back()));
    return s;
}

WaveState make_state(const Grid& grid, const std::vector<double>& amplitudes, double time)
{
    grid.validate();
    if (amplitudes.size() != grid.n_points) throw InputError("state", "amplitude count does not match the grid");
    WaveState s{grid, std::vector<cplx>(amplitudes.begin(), amplitudes.end()), time};
    return s;
}

cplx overlap(const WaveState& a, const std::vector<double>& b)
{
    if (b.size() != a.psi.size()) throw InputError("state", "overlap of states on different grids");
    const std::size_t n = b.size();
    cplx s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::conj(a.psi[i]) * b[i];
    s -= 0.5 * (std::conj(a.psi[0]) * b[0] + std::conj(a.psi[n - 1]) * b[n - 1]);
    return s * um(a.grid.spacing());
}

double fidelity(const WaveState& state, const std::vector<double>& target) { return std::norm(overlap(state, target)); }

std::pair<double, double> energy_moments(const WaveState& state, const PotentialSpec& family, double a2)
{
    const SplitPotential pot(family, state.grid);
    const auto [e1, e2] = pot.moments(state.psi, a2);
    const double eu = internal_units().energy_unit();
    return {e1 * eu, std::max(e2 - e1 * e1, 0.0) * eu * eu};
}

double position_expectation(const WaveState& state)
{
    const double h = um(state.grid.spacing()), z0 = um(state.grid.z_min);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < state.psi.size(); ++i) {
        const double p = std::norm(state.psi[i]);
        num += p * (z0 + h * static_cast<double>(i));
        den += p;
    }
    return num / den * internal_units().length_unit();
}

WaveState propagate(const WaveState& initial, const PotentialSpec& family, const A2Path& a2_of_t, double t_end,
                    double dt, const PropagateOptions& options)
{
    if (!(dt > 0.0)) throw InputError("dt", "must be positive");
    if (t_end < initial.time) throw InputError("t_end", "must not precede the initial time");
    if (initial.psi.size() != initial.grid.n_points) throw InputError("state", "amplitude count does not match the grid");
    WaveState state = initial;
    if (t_end == initial.time) return state;

    const auto& units = internal_units();
    const std::size_t steps = static_cast<std::size_t>(std::ceil((t_end - initial.time) / dt - 1e-9));
    const double dt_si = (t_end - initial.time) / static_cast<double>(steps);
    const double tau = units.to_internal(dt_si, Dimension::time);
    const SplitPotential pot(family, state.grid);
    const std::size_t n = state.psi.size();
    const double h = pot.h;
    const double off = -0.5 / (h * h);

    auto [e_ref, e2] = pot.moments(state.psi, a2_of_t(initial.time));
    const double band = options.band_halfwidth > 0.0
                            ? units.to_internal(options.band_halfwidth, Dimension::energy)
                            : 6.0 * std::sqrt(std::max(e2 - e_ref * e_ref, 0.0));
    if (options.dt_gate && tau * band > 0.05 * two_pi) {
        std::ostringstream msg, hint;
        msg << "time step " << dt_si << " s does not resolve the occupied band";
        hint << "dt <= " << units.from_internal(0.05 * two_pi / band, Dimension::time) << " s";
        throw Refusal("dt", msg.str(), hint.str());
    }

    const double norm0 = discrete_norm(state.psi, h);
    const double half_tau = 0.5 * tau;
    const double bi = half_tau * off;  // b = i * bi
    std::vector<double> base(n), rr(n), ri(n), cr(n), ci(n);
    for (std::size_t i = 0; i < n; ++i) base[i] = 1.0 / (h * h) + pot.v0[i];
    for (std::size_t step = 0; step < steps; ++step) {
        const double t = initial.time + dt_si * static_cast<double>(step);
        const double a2 = a2_of_t(t + 0.5 * dt_si);
        const double k2 = SplitPotential::k2(a2);
        auto& psi = state.psi;
        double* p = reinterpret_cast<double*>(psi.data());

        // rhs = (1 - i tau/2 H') psi, written out in real arithmetic
        for (std::size_t i = 0; i < n; ++i) {
            const double d = base[i] + k2 * pot.z2[i] - e_ref;
            double hr = d * p[2 * i], hi = d * p[2 * i + 1];
            if (i > 0) hr += off * p[2 * i - 2], hi += off * p[2 * i - 1];
            if (i + 1 < n) hr += off * p[2 * i + 2], hi += off * p[2 * i + 3];
            rr[i] = p[2 * i] + half_tau * hi;
            ri[i] = p[2 * i + 1] - half_tau * hr;
        }
        // (1 + i tau/2 H') psi_new = rhs by the Thomas algorithm
        double prev_r = 0.0, prev_i = 0.0, pcr = 0.0, pci = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = base[i] + k2 * pot.z2[i] - e_ref;
            // m = 1 + i tau/2 d - (i bi) c'
            const double mr = 1.0 + bi * pci;
            const double mi = half_tau * d - bi * pcr;
            const double inv = 1.0 / (mr * mr + mi * mi);
            const double ir = mr * inv, ii = -mi * inv;
            // c' = (i bi) / m
            cr[i] = -bi * ii;
            ci[i] = bi * ir;
            // psi = (rhs - i bi psi_prev) / m
            const double xr = rr[i] + bi * prev_i, xi = ri[i] - bi * prev_r;
            prev_r = xr * ir - xi * ii;
            prev_i = xr * ii + xi * ir;
            p[2 * i] = prev_r;
            p[2 * i + 1] = prev_i;
            pcr = cr[i];
            pci = ci[i];
        }
        for (std::size_t i = n - 1; i-- > 0;) {
            const double xr = p[2 * i + 2], xi = p[2 * i + 3];
            p[2 * i] -= cr[i] * xr - ci[i] * xi;
            p[2 * i + 1] -= cr[i] * xi + ci[i] * xr;
        }

        state.time = t + dt_si;
        const bool last = step + 1 == steps;
        if (options.reference_interval > 0 && ((step + 1) % options.reference_interval == 0 || last)) {
            const double drift = std::abs(discrete_norm(psi, h) / norm0 - 1.0);
            if (drift > options.norm_tolerance) {
                std::ostringstream msg;
                msg << "norm drifted by " << drift << " at t = " << state.time << " s";
                throw Refusal("norm", msg.str(), "reduce dt");
            }
            e_ref = pot.moments(psi, a2).first;
        }
        if (options.observer && options.observer_stride > 0 && ((step + 1) % options.observer_stride == 0 || last))
            options.observer(state, a2);
    }
    return state;
}

WaveState propagate(const WaveState& initial, const PotentialSpec& family, const Schedule& schedule, double dt,
                    const PropagateOptions& options)
{
    schedule.validate(false);
    const double t0 = initial.time - schedule.times.front();
    return propagate(
        initial, family, [&schedule, t0](double t) { return schedule.a2_at(t - t0); },
        initial.time + schedule.duration(), dt, options);
}

std::size_t FidelityScan::argmax() const
{
    if (fidelities.empty()) throw std::logic_error("FidelityScan::argmax on an empty scan");
    return static_cast<std::size_t>(std::max_element(fidelities.begin(), fidelities.end()) - fidelities.begin());
}

void InitProtocol::validate() const
{
    grid.validate();
    if (!(a2_start > a2_m)) throw InputError("a2_m", "must lie below a2_start");
    if (!(a2_m >= a2_end) || !(a2_end >= 0.0)) throw InputError("a2_end", "need a2_m >= a2_end >= 0");
    if (!(dt >= 0.0)) throw InputError("dt", "must be non-negative");
    if (!(stage2_epsilon > 0.0)) throw InputError("stage2_epsilon", "must be positive");
}

InitChoice choose_stage_boundary(const std::vector<Grap>& graps, double t1_scale)
{
    if (!(t1_scale > 0.0)) throw InputError("t1", "must be positive");
    std::vector<Grap> sorted = graps;
    std::sort(sorted.begin(), sorted.end(), [](const Grap& a, const Grap& b) { return a.a2_star > b.a2_star; });
    const double threshold = 1.0 / t1_scale;
    std::size_t current = 0;
    double last_diabatic = std::numeric_limits<double>::quiet_NaN();
    for (const auto& g : sorted) {
        if (g.lower_index != current) continue;
        if (g.gap < threshold) {
            ++current;
            last_diabatic = g.a2_star;
            continue;
        }
        if (current == 0)
            throw Refusal("stage-boundary", "the first GRAP on the right-well branch is already adiabatic",
                          "shorten t1 or start the scan at larger a2");
        return {0.5 * (last_diabatic + g.a2_star), current, current};
    }
    throw Refusal("stage-boundary", "no adiabatic GRAP terminates the right-well branch within the scan",
                  "extend the scan to smaller a2 or raise the gap ceiling");
}

Schedule stage2_shape(const InitProtocol& p)
{
    p.validate();
    if (p.a2_m == p.a2_end) return {};
    const FullPotentialProvider provider(p.family, p.grid, p.target_index, p.faquad_band);
    return faquad_schedule(provider, p.a2_m, p.a2_end, p.stage2_epsilon);
}

Schedule init_schedule(const InitProtocol& p, double t1, double t2, const Schedule* shape)
{
    p.validate();
    if (!(t1 > 0.0)) throw InputError("t1", "must be positive");
    const double eps1 = stage1_time_to(p.a2_start, 1.0, p.a2_m) / t1;
    Schedule s1 = stage1_schedule(p.a2_start, p.a2_m, eps1);
    if (p.a2_m == p.a2_end) return s1;
    if (!(t2 > 0.0)) throw InputError("t2", "must be positive");
    const Schedule s2 = (shape ? *shape : stage2_shape(p)).rescaled(t2);
    return compose_stages(s1, s2);
}

namespace {

struct Endpoints {
    std::vector<double> ground, target;
    double band;  // J
};

Endpoints endpoints(const InitProtocol& p, double a2_start, double a2_end)
{
    const auto w0 = solve_window(p.family.with_a2(a2_start), p.grid, 0, 0);
    const auto wt = solve_window(p.family.with_a2(a2_end), p.grid, p.target_index, p.target_index);
    return {w0.wavefunction(0), wt.wavefunction(p.target_index), init_band(p)};
}

}  // namespace

double init_band(const InitProtocol& p)
{
    return static_cast<double>(p.target_index + 4) * PhysConsts::hbar * p.family.omega_h_prime;
}

double default_init_dt(const InitProtocol& p) { return 0.9 * 0.05 * two_pi * PhysConsts::hbar / init_band(p); }

double initialization_fidelity(const InitProtocol& p, const Schedule& schedule)
{
    p.validate();
    const auto ends = endpoints(p, schedule.a2.front(), schedule.a2.back());
    WaveState psi = make_state(p.grid, ends.ground);
    if (schedule.duration() == 0.0) return fidelity(psi, ends.target);
    PropagateOptions opt;
    opt.band_halfwidth = ends.band;
    const double dt = p.dt > 0.0 ? p.dt : default_init_dt(p);
    psi = propagate(psi, p.family, schedule, dt, opt);
    return fidelity(psi, ends.target);
}

double initialization_fidelity(const InitProtocol& p, double t1, double t2, const Schedule* shape)
{
    p.validate();
    if (t1 == 0.0 && t2 == 0.0) {
        const auto ends = endpoints(p, p.a2_start, p.a2_end);
        return fidelity(make_state(p.grid, ends.ground), ends.target);
    }
    return initialization_fidelity(p, init_schedule(p, t1, t2, shape));
}

FidelityScan fidelity_scan(const InitProtocol& p, FidelityScan::Axis axis, const std::vector<double>& values,
                           double fixed_other, unsigned jobs)
{
    FidelityScan scan;
    scan.axis = axis;
    scan.values = values;
    scan.fidelities.assign(values.size(), 0.0);
    if (axis == FidelityScan::Axis::t1)
        scan.fixed_t2 = fixed_other;
    else
        scan.fixed_t1 = fixed_other;
    const Schedule shape = stage2_shape(p);
    auto run = [&](std::size_t k) {
        const double t1 = axis == FidelityScan::Axis::t1 ? values[k] : fixed_other;
        const double t2 = axis == FidelityScan::Axis::t2 ? values[k] : fixed_other;
        scan.fidelities[k] = initialization_fidelity(p, t1, t2, &shape);
    };
    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(values.size())));
    if (jobs == 1) {
        for (std::size_t k = 0; k < values.size(); ++k) run(k);
        return scan;
    }
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(jobs);
    for (unsigned j = 0; j < jobs; ++j)
        workers.emplace_back([&, j] {
            try {
                for (std::size_t k = j; k < values.size(); k += jobs) run(k);
            } catch (...) {
                errors[j] = std::current_exception();
            }
        });
    for (auto& w : workers) w.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return scan;
}

}  // namespace dipoleforge
