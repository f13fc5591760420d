#include "dipoleforge/faquad.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dipoleforge/errors.hpp"

namespace dipoleforge {

namespace {

const double sqrt_e_over_m = std::sqrt(PhysConsts::elementary_charge / PhysConsts::electron_mass);

double bound_from(const EigenWindow& w, std::size_t ref, std::size_t band)
{
    const double e = PhysConsts::elementary_charge;
    const double um2 = 1e-12;
    double best = std::numeric_limits<double>::infinity();
    const std::size_t lo = ref > band ? ref - band : 0;
    for (std::size_t i = std::max(lo, w.n_lo); i <= std::min(ref + band, w.n_hi); ++i) {
        if (i == ref) continue;
        const double z2 = std::abs(position_moment(w, ref, i, 2)) * um2;
        if (z2 == 0.0) continue;
        const double de = w.energy(ref) - w.energy(i);
        best = std::min(best, de * de / (e * z2));
    }
    if (!std::isfinite(best)) throw std::runtime_error("adiabatic bound: no coupled states in band");
    return best;
}

}  // namespace

double Schedule::a2_at(double t) const
{
    if (times.empty()) throw std::logic_error("Schedule::a2_at on an empty schedule");
    if (t <= times.front()) return a2.front();
    if (t >= times.back()) return a2.back();
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    const std::size_t k = static_cast<std::size_t>(it - times.begin());
    const double w = (t - times[k - 1]) / (times[k] - times[k - 1]);
    return a2[k - 1] + w * (a2[k] - a2[k - 1]);
}

void Schedule::validate(bool monotone) const
{
    if (times.empty() || times.size() != a2.size()) throw InputError("schedule", "times and a2 must be non-empty and equal length");
    if (!stage.empty() && stage.size() != times.size()) throw InputError("schedule", "stage column length mismatch");
    for (std::size_t k = 1; k < times.size(); ++k) {
        if (!(times[k] > times[k - 1])) throw InputError("schedule.times", "must be strictly increasing");
        if (monotone && !(a2[k] < a2[k - 1])) throw InputError("schedule.a2", "must be strictly decreasing");
    }
}

Schedule Schedule::rescaled(double target) const
{
    if (!(target > 0.0) || !(duration() > 0.0)) throw InputError("duration", "must be positive");
    const double k = target / duration();
    Schedule out = *this;
    for (auto& t : out.times) t = times.front() + (t - times.front()) * k;
    out.times.back() = times.front() + target;
    out.t_m = times.front() + (t_m - times.front()) * k;
    out.epsilon = epsilon / k;
    return out;
}

double stage1_closed_form(double a2_t0, double epsilon, double t)
{
    const double x = 8.0 * sqrt_e_over_m * epsilon * t + 1.0 / std::sqrt(a2_t0);
    return 1.0 / (x * x);
}

double stage1_time_to(double a2_t0, double epsilon, double a2)
{
    if (!(a2_t0 > 0.0) || !(a2 > 0.0) || !(epsilon > 0.0)) throw InputError("stage1", "a2 and epsilon must be positive");
    return (1.0 / std::sqrt(a2) - 1.0 / std::sqrt(a2_t0)) / (8.0 * sqrt_e_over_m * epsilon);
}

Schedule stage1_schedule(double a2_t0, double a2_end, double epsilon, std::size_t samples)
{
    if (!(a2_t0 > a2_end) || !(a2_end > 0.0)) throw InputError("stage1", "need a2_t0 > a2_end > 0");
    if (samples < 2) throw InputError("samples", "need at least two samples");
    const double t_end = stage1_time_to(a2_t0, epsilon, a2_end);
    Schedule s;
    s.epsilon = epsilon;
    for (std::size_t k = 0; k < samples; ++k) {
        const double t = t_end * static_cast<double>(k) / static_cast<double>(samples - 1);
        s.times.push_back(t);
        s.a2.push_back(k + 1 == samples ? a2_end : stage1_closed_form(a2_t0, epsilon, t));
        s.stage.push_back(1);
    }
    s.t_m = t_end;
    return s;
}

double HarmonicProvider::adiabatic_bound(double a2) const
{
    if (!(a2 > 0.0)) throw InputError("a2", "harmonic provider needs a2 > 0");
    const double omega = harmonic_frequency(a2);
    const double l2 = PhysConsts::hbar / (2.0 * PhysConsts::electron_mass * omega);
    const double n = static_cast<double>(ref_);
    double best = std::numeric_limits<double>::infinity();
    // only Delta n = +-2 couple through z^2 off the diagonal
    for (int s : {-2, 2}) {
        if (static_cast<std::size_t>(std::abs(s)) > band_ || (s < 0 && ref_ < 2)) continue;
        const double z2 = s > 0 ? l2 * std::sqrt((n + 1) * (n + 2)) : l2 * std::sqrt(n * (n - 1));
        const double de = PhysConsts::hbar * omega * s;
        best = std::min(best, de * de / (PhysConsts::elementary_charge * z2));
    }
    if (!std::isfinite(best)) throw std::runtime_error("adiabatic bound: band excludes every coupled level");
    return best;
}

RightWellProvider::RightWellProvider(PotentialSpec family, std::size_t n_points, std::size_t ref, std::size_t band)
    : family_(family), n_points_(n_points), ref_(ref), band_(band)
{
}

Grid RightWellProvider::grid_at(double a2) const
{
    const Grid full = default_grid(family_, n_points_);
    const auto barrier = barrier_position(family_.with_a2(a2));
    if (!barrier) return full;
    return {*barrier, full.z_max, n_points_};
}

double RightWellProvider::adiabatic_bound(double a2) const
{
    SolveOptions opt;
    opt.domain_gate = false;
    const auto w = solve_window(family_.with_a2(a2), grid_at(a2), 0, ref_ + band_, opt);
    return bound_from(w, ref_, band_);
}

FullPotentialProvider::FullPotentialProvider(PotentialSpec family, Grid grid, std::size_t ref, std::size_t band)
    : family_(family), grid_(grid), ref_(ref), band_(band)
{
}

double FullPotentialProvider::adiabatic_bound(double a2) const
{
    const std::size_t lo = ref_ > band_ ? ref_ - band_ : 0;
    const auto w = solve_window(family_.with_a2(a2), grid_, lo, ref_ + band_);
    return bound_from(w, ref_, band_);
}

Schedule faquad_schedule(const SpectrumProvider& provider, double a2_start, double a2_end, double epsilon,
                         const FaquadOptions& options)
{
    if (!(a2_start > a2_end) || !(a2_end >= 0.0)) throw InputError("a2_range", "need a2_start > a2_end >= 0");
    if (!(epsilon > 0.0)) throw InputError("epsilon", "must be positive");

    auto rate = [&](double b) {
        if (!(b > 0.0) || !std::isfinite(b)) throw std::runtime_error("faquad: adiabatic bound is not positive");
        return PhysConsts::hbar / (epsilon * b);  // dt / |da2|
    };

    Schedule s;
    s.epsilon = epsilon;
    double a = a2_start, t = 0.0;
    double b_a = provider.adiabatic_bound(a);
    s.times.push_back(0.0);
    s.a2.push_back(a);
    s.stage.push_back(1);
    double h_try = std::numeric_limits<double>::infinity();
    while (a > a2_end) {
        const double h_max = options.max_relative_step * std::max(a, options.floor_fraction * a2_start);
        double h = std::min({h_try, h_max, a - a2_end});
        double b_mid = 0.0, b_end = 0.0, spread = 1.0;
        for (std::size_t halving = 0;; ++halving) {
            b_mid = provider.adiabatic_bound(a - 0.5 * h);
            b_end = provider.adiabatic_bound(a - h);
            spread = std::max({b_a, b_mid, b_end}) / std::min({b_a, b_mid, b_end});
            if (spread <= 1.0 + options.dip_tolerance || halving >= options.max_halvings) break;
            h *= 0.5;
        }
        h_try = spread <= 1.0 + 0.5 * options.dip_tolerance ? 2.0 * h : h;
        // dt/da2 depends on a2 only, so RK4 reduces to Simpson's rule
        t += h / 6.0 * (rate(b_a) + 4.0 * rate(b_mid) + rate(b_end));
        const bool last = a - h <= a2_end;
        a = last ? a2_end : a - h;
        b_a = b_end;
        s.times.push_back(t);
        s.a2.push_back(a);
        s.stage.push_back(1);
    }
    s.t_m = t;
    return s;
}

Schedule compose_stages(const Schedule& stage1, const Schedule& stage2)
{
    stage1.validate(false);
    if (stage2.empty()) return stage1;
    stage2.validate(false);
    const double a = stage1.a2.back(), b = stage2.a2.front();
    if (std::abs(a - b) > 1e-9 * std::max(std::abs(a), std::abs(b)))
        throw InputError("junction", "stage II must start where stage I ends");
    Schedule out = stage1;
    for (auto& st : out.stage) st = 1;
    const double shift = stage1.times.back() - stage2.times.front();
    for (std::size_t k = 1; k < stage2.times.size(); ++k) {
        out.times.push_back(stage2.times[k] + shift);
        out.a2.push_back(stage2.a2[k]);
        out.stage.push_back(2);
    }
    out.t_m = stage1.times.back();
    return out;
}

}  // namespace dipoleforge
