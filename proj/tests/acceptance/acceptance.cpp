// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [--out DIR] [--jobs N] [--paper]
//
// Desk-scale criteria always run. The two paper-scale criteria (d = 40 um,
// 2^19-point grids) take tens of minutes and only run with --paper; without
// it they print SKIP. Exit status is 0 when every criterion that ran passed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <json.hpp>

#include "dipoleforge/eigensolver.hpp"
#include "dipoleforge/errors.hpp"
#include "dipoleforge/faquad.hpp"
#include "dipoleforge/grap_scan.hpp"
#include "dipoleforge/open_system.hpp"
#include "dipoleforge/potential.hpp"
#include "dipoleforge/run.hpp"

using namespace dipoleforge;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const double hbar = PhysConsts::hbar;
const double e_charge = PhysConsts::elementary_charge;

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Settings {
    fs::path out = "acceptance_runs";
    unsigned jobs = 1;
    bool paper = false;
};

Hygiene hygiene_total;

void absorb_hygiene(const json& audit)
{
    Hygiene h;
    h.max_trace_error = audit.at("max_trace_error").get<double>();
    h.max_hermiticity_error = audit.at("max_hermiticity_error").get<double>();
    h.min_eigenvalue = audit.at("min_eigenvalue").get<double>();
    h.runs = audit.at("runs").get<std::size_t>();
    h.steps = audit.at("steps").get<std::size_t>();
    hygiene_total.merge(h);
}

json run_demo(const Settings& s, const std::string& experiment)
{
    RunRequest r;
    r.experiment = experiment;
    r.scale_flag = "demo";
    r.out = s.out / experiment;
    r.jobs = s.jobs;
    return run(r);
}

// column name -> cells
using Columns = std::map<std::string, std::vector<std::string>>;

Columns read_csv(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) header.push_back(cell);
    }
    Columns cols;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::size_t k = 0;
        for (std::string cell; std::getline(ss, cell, ',') && k < header.size(); ++k) cols[header[k]].push_back(cell);
    }
    return cols;
}

std::vector<double> numbers(const std::vector<std::string>& cells)
{
    std::vector<double> v;
    for (const auto& c : cells) v.push_back(std::stod(c));
    return v;
}

// ---------------------------------------------------------------------------

Outcome harmonic_oracle(const Settings& s)
{
    const double omega = two_pi * 300e6;
    const PotentialSpec spec{harmonic_coefficient(omega), 0.0, 0.0, 1e-6, omega};
    SolveOptions so;
    so.jobs = s.jobs;
    so.dipole_band = 2;
    const auto start = std::chrono::steady_clock::now();
    const auto w = solve_window(spec, Grid{-2.5e-6, 2.5e-6, 1 << 16}, 0, 22, so);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    double worst_e = 0.0;
    for (std::size_t n = 0; n <= 20; ++n)
        worst_e = std::max(worst_e, std::abs(w.energy(n) / (hbar * omega * (n + 0.5)) - 1.0));
    const auto table = dipole_table(w, 2);
    const double z01 = std::abs(table.mu(0, 1));
    double forbidden = 0.0;
    for (std::size_t n = 0; n + 2 <= 20; ++n) forbidden = std::max(forbidden, std::abs(table.mu(n, n + 2)));

    Outcome o;
    o.pass = worst_e < 1e-6 && std::abs(z01 - 0.1752) < 1e-4 && std::abs(z01 / fock_edm(omega) - 1.0) < 1e-6 &&
             forbidden < 1e-8 && secs < 10.0;
    o.detail = fmt::format("max rel energy error {:.2e}, |z01| = {:.7f} um (ladder {:.7f}), max |z_n,n+2| = {:.1e} um, {:.1f} s",
                           worst_e, z01, fock_edm(omega), forbidden, secs);
    return o;
}

Outcome potential_identities(const Settings&)
{
    double worst = 0.0;
    for (double d : {5e-6, 40e-6}) {
        const double omega = two_pi * 300e6;
        const auto s = build_potential(d, omega);
        const double scale = s.a3 * d * d;
        worst = std::max(worst, std::abs(potential_slope(s, 0.0)) / scale);
        worst = std::max(worst, std::abs(potential_slope(s, -d)) / scale);
        const double w2 = e_charge * potential_curvature(s, -d) / PhysConsts::electron_mass;
        worst = std::max(worst, std::abs(w2 / (omega * omega) - 1.0));
    }
    return {worst < 1e-10, fmt::format("max relative residual {:.1e}", worst)};
}

Outcome paper_spectrum(const Settings& s)
{
    const auto family = build_potential(40e-6, two_pi * 300e6);
    const Grid g = default_grid(family, 1 << 19);
    SolveOptions so;
    so.jobs = s.jobs;
    so.keep_wavefunctions = false;
    so.node_audit_stride = 50;
    const auto w = solve_window(family, g, 3679, 4080, so);
    const auto curve = transition_curve(w);
    const auto fine = transition_curve(solve_window(family, g.refined(), 3679, 4080, so));

    double edm_min = 1e300, doubling = 0.0;
    std::size_t omega_rises = 0, edm_drops = 0;
    for (std::size_t k = 0; k < curve.size(); ++k) {
        edm_min = std::min(edm_min, curve[k].edm);
        doubling = std::max(doubling, std::abs(fine[k].omega / curve[k].omega - 1.0));
        if (k > 0 && curve[k].omega >= curve[k - 1].omega) ++omega_rises;
        if (k > 0 && curve[k].edm <= curve[k - 1].edm) ++edm_drops;
    }
    Outcome o;
    o.pass = edm_min > 10.0 && omega_rises == 0 && edm_drops == 0 && doubling < 1e-3;
    o.detail = fmt::format("min EDM {:.2f} e*um; omega {:.1f} -> {:.1f} MHz ({} increasing steps); {} EDM decreasing "
                           "steps; grid doubling {:.1e}",
                           edm_min, curve.front().omega / two_pi / 1e6, curve.back().omega / two_pi / 1e6,
                           omega_rises, edm_drops, doubling);
    return o;
}

Outcome operating_point(const Settings& s)
{
    const std::size_t n = 3566, np = 3565;
    const double target = two_pi * 59.9e6;
    const auto family = build_potential(40e-6, two_pi * 300e6);
    const double ap = harmonic_coefficient(family.omega_h_prime);
    const Grid g = default_grid(family, 1 << 19);
    SolveOptions so;
    so.jobs = s.jobs;
    so.keep_wavefunctions = false;
    so.node_audit_stride = 50;
    auto omega_at = [&](double a2) {
        const auto w = solve_window(family.with_a2(a2), g, np, n, so);
        return (w.energy(n) - w.energy(np)) / hbar;
    };

    // coarse sweep over a2 >= 0, then golden-section refinement of each local minimum
    const std::size_t steps = 60;
    const double a2_max = 0.3 * ap;
    std::vector<double> a2s, om;
    for (std::size_t k = 0; k <= steps; ++k) {
        a2s.push_back(a2_max * k / steps);
        om.push_back(omega_at(a2s.back()));
    }
    double best = *std::min_element(om.begin(), om.end());
    double best_a2 = a2s[std::min_element(om.begin(), om.end()) - om.begin()];
    std::optional<std::pair<double, double>> bracket;
    for (std::size_t k = 0; k < steps && !bracket; ++k)
        if ((om[k] - target) * (om[k + 1] - target) <= 0.0) bracket = {a2s[k], a2s[k + 1]};
    for (std::size_t k = 1; k < steps && !bracket; ++k) {
        if (!(om[k] <= om[k - 1] && om[k] <= om[k + 1])) continue;
        double lo = a2s[k - 1], hi = a2s[k + 1];
        const double r = 0.5 * (std::sqrt(5.0) - 1.0);
        for (int it = 0; it < 40; ++it) {
            const double x1 = hi - r * (hi - lo), x2 = lo + r * (hi - lo);
            const double f1 = omega_at(x1), f2 = omega_at(x2);
            if (f1 < best) best = f1, best_a2 = x1;
            if (f2 < best) best = f2, best_a2 = x2;
            if (f1 < target) {
                bracket = {lo, x1};
                break;
            }
            (f1 < f2 ? hi : lo) = (f1 < f2 ? x2 : x1);
        }
    }
    if (!bracket)
        return {false, fmt::format("omega_3566,3565 never reaches 59.9 MHz for a2 in [0, {:.2f} a2']: minimum {:.1f} "
                                   "MHz at a2 = {:.4f} a2'",
                                   a2_max / ap, best / two_pi / 1e6, best_a2 / ap)};

    auto [lo, hi] = *bracket;
    const bool rising = omega_at(hi) > omega_at(lo);
    for (int it = 0; it < 50; ++it) {
        const double mid = 0.5 * (lo + hi);
        ((omega_at(mid) < target) == rising ? lo : hi) = mid;
    }
    const double a2_star = 0.5 * (lo + hi);
    SolveOptions full = so;
    full.dipole_band = 12;
    const auto w = solve_window(family.with_a2(a2_star), g, np - 12, n + 12, full);
    const auto table = dipole_table(w, 12);
    const double mu = std::abs(table.mu(n, np));
    const double det = effective_detuning(table, n, np, 10);
    Outcome o;
    o.pass = std::abs(mu / 7.16 - 1.0) <= 0.15 && std::abs(det / (two_pi * 5.5e6) - 1.0) <= 0.20;
    o.detail = fmt::format("a2* = {:.5f} a2', |mu| = {:.2f} e*um, effective detuning {:.2f} MHz", a2_star / ap, mu,
                           det / two_pi / 1e6);
    return o;
}

Outcome grap_landau_zener(const Settings& s)
{
    // synthetic hyperbolic anticrossing
    const double a_star = 1.2345e4, delta = two_pi * 1e5, slope = 2.0e4;
    std::vector<double> a2;
    std::vector<std::vector<double>> energies;
    for (int k = 0; k <= 60; ++k) {
        const double v = 1.0e4 + 50.0 * k;
        const double x = slope * (v - a_star);
        const double half = std::sqrt(x * x + 0.25 * delta * delta);
        a2.push_back(v);
        energies.push_back({hbar * (-half - 3e8), hbar * (half - 3e8), hbar * 4e8});
    }
    const auto graps = detect_graps(make_scan(0, a2, energies));
    const double gap_err = graps.size() == 1 ? std::abs(graps.front().gap / delta - 1.0) : 1.0;

    const json m = run_demo(s, "scan");
    const auto lz = read_csv(s.out / "scan" / "landau_zener.csv");
    const auto tdse = numbers(lz.at("p_diabatic_tdse"));
    const auto formula = numbers(lz.at("p_landau_zener"));
    double dev = 0.0;
    for (std::size_t k = 0; k < tdse.size(); ++k) dev = std::max(dev, std::abs(tdse[k] - formula[k]));
    const double p_min = *std::min_element(formula.begin(), formula.end());
    const double p_max = *std::max_element(formula.begin(), formula.end());

    Outcome o;
    o.pass = graps.size() == 1 && gap_err < 0.01 && tdse.size() >= 3 && p_min <= 0.1 + 1e-9 && p_max >= 0.9 - 1e-9 &&
             dev < 0.1;
    o.detail = fmt::format("synthetic gap error {:.1e}; {} sweep rates, P_LZ in [{:.2f}, {:.2f}], max |P_tdse - P_LZ| = "
                           "{:.4f} at the n = {} GRAP",
                           gap_err, tdse.size(), p_min, p_max, dev,
                           m.at("results").at("landau_zener").at("lower_index").get<int>());
    return o;
}

Outcome faquad_consistency(const Settings&)
{
    const auto start = std::chrono::steady_clock::now();
    const double a0 = harmonic_coefficient(two_pi * 300e6), a1 = 0.15 * a0;
    double worst = 0.0;
    for (double eps : {0.05, 0.1, 0.3}) {
        const auto sched = faquad_schedule(HarmonicProvider(0, 6), a0, a1, eps);
        for (std::size_t k = 1; k < sched.times.size(); ++k)
            worst = std::max(worst, std::abs(sched.times[k] / stage1_time_to(a0, eps, sched.a2[k]) - 1.0));
    }
    const auto family = build_potential(5e-6, two_pi * 300e6);
    const RightWellProvider rw(family, 4096, 0, 6);
    std::vector<double> products;
    for (double eps : {0.1, 0.4}) products.push_back(faquad_schedule(rw, a0, 0.5 * a0, eps).duration() * eps);
    const auto [lo, hi] = std::minmax_element(products.begin(), products.end());
    const double spread = (*hi - *lo) / *lo;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {worst < 1e-3 && spread < 5e-3 && secs < 60.0,
            fmt::format("closed form vs integration {:.1e}; duration*eps spread {:.1e}; {:.1f} s", worst, spread, secs)};
}

Outcome demo_initialization(const Settings& s)
{
    const json r = run_demo(s, "evolve").at("results");
    const bool interior = r.at("scan").at("interior_maximum").get<bool>();
    const double f = r.at("fidelity").get<double>();
    const double shift = std::abs(f - r.at("fidelity_half_dt").get<double>());
    return {interior && f >= 0.95 && shift < 1e-3,
            fmt::format("t1 interior maximum {} at {:.0f} ns, F = {:.4f} (t2 = {:.0f} ns, target n = {}), dt halving "
                        "shift {:.1e}",
                        interior ? "yes" : "no", r.at("scan").at("argmax_s").get<double>() * 1e9, f,
                        r.at("t2_s").get<double>() * 1e9, r.at("stage_boundary").at("target_index").get<int>(), shift)};
}

Outcome readout(const Settings& s)
{
    const auto tl = two_level_model(two_pi * 59.9e6, 7.16e-6);
    const auto ideal = readout_transfer(tl, no_noise(tl), 14.0, 0.0);
    hygiene_total.merge(ideal.hygiene);
    const double t = transfer_time(14.0, 7.16e-6);

    const json m = run_demo(s, "readout");
    absorb_hygiene(m.at("audits").at("hygiene"));
    const json& r = m.at("results");
    const bool interior = r.at("interior_maximum").get<bool>();
    const double best = r.at("optimum").at("F_avg").get<double>();
    const std::size_t basis = r.at("model").at("basis")[1].get<std::size_t>() -
                              r.at("model").at("basis")[0].get<std::size_t>() + 1;
    return {ideal.f_avg >= 0.999 && std::abs(t / 178e-9 - 1.0) <= 0.01 && interior && best >= 0.90 && basis == 15,
            fmt::format("noiseless two-level F_avg = {:.8f}; transfer time {:.1f} ns; noisy {}-state curve interior "
                        "maximum {} with F_avg = {:.4f} at {:.0f} ns (reference 0.952 at 180 ns)",
                        ideal.f_avg, t * 1e9, basis, interior ? "yes" : "no", best,
                        r.at("optimum").at("transfer_time_s").get<double>() * 1e9)};
}

Outcome sensing(const Settings& s)
{
    const json m = run_demo(s, "sense");
    absorb_hygiene(m.at("audits").at("hygiene"));
    const auto csv = read_csv(s.out / "sense" / "susceptibility.csv");
    std::map<std::string, std::vector<std::pair<double, double>>> branch;
    for (std::size_t k = 0; k < csv.at("branch").size(); ++k)
        branch[csv.at("branch")[k]].emplace_back(std::stod(csv.at("t_s")[k]),
                                                 std::stod(csv.at("susceptibility_per_V_m")[k]));

    double linear = 0.0;
    for (const auto& [name, mu] : std::vector<std::pair<std::string, double>>{
             {"giant_dipole", 7.16}, {"dipole_1_e_um", 1.0}, {"dipole_2_e_um", 2.0}, {"dipole_3_e_um", 3.0}})
        for (const auto& [t, chi] : branch.at(name + "_noiseless"))
            linear = std::max(linear, std::abs(chi / ideal_susceptibility(mu, t) - 1.0));
    const auto tl = two_level_model(two_pi * 59.9e6, 7.16e-6);
    const auto c = susceptibility(tl, no_noise(tl), {1e-6}, 1e-6);
    hygiene_total.merge(c.hygiene);
    const double at_1us = c.numeric.front();

    const auto& giant = branch.at("giant_dipole");
    const bool interior = m.at("results").at("branches").at("giant_dipole").at("interior_maximum").get<bool>();
    std::size_t above = 0;
    for (std::size_t k = 0; k < giant.size(); ++k) {
        bool all = true;
        for (const char* name : {"dipole_1_e_um_noiseless", "dipole_2_e_um_noiseless", "dipole_3_e_um_noiseless"})
            all = all && giant[k].second > branch.at(name)[k].second;
        if (all) ++above;
    }
    return {linear < 0.02 && std::abs(at_1us / 5.44e3 - 1.0) <= 0.02 && interior && above > 0,
            fmt::format("noiseless max deviation {:.1e}; chi(1 us) = {:.1f} /(V/m); noisy interior maximum {}; noisy giant "
                        "dipole above the noiseless 1-3 e*um curves at {} of {} times",
                        linear, at_1us, interior ? "yes" : "no", above, giant.size())};
}

Outcome hygiene(const Settings&)
{
    const Hygiene& h = hygiene_total;
    return {h.runs > 0 && h.max_trace_error < 1e-8 && h.min_eigenvalue > -1e-9,
            fmt::format("{} runs, {} steps: max trace error {:.1e}, min eigenvalue {:.1e}, Hermiticity {:.1e}", h.runs,
                        h.steps, h.max_trace_error, h.min_eigenvalue, h.max_hermiticity_error)};
}

}  // namespace

int main(int argc, char** argv)
{
    std::setvbuf(stdout, nullptr, _IOLBF, 0);
    Settings s;
    CLI::App app{"dipoleforge acceptance run"};
    app.add_option("--out", s.out, "directory for the experiment outputs");
    app.add_option("--jobs", s.jobs, "worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--paper", s.paper, "also run the paper-scale criteria (tens of minutes)");
    CLI11_PARSE(app, argc, argv);

    struct Criterion {
        const char* name;
        std::function<Outcome(const Settings&)> check;
        bool paper;
    };
    // hygiene last: it aggregates every master-equation run above
    const std::vector<Criterion> criteria = {
        {"harmonic oracle", harmonic_oracle, false},
        {"potential identities", potential_identities, false},
        {"paper-scale spectrum", paper_spectrum, true},
        {"operating point", operating_point, true},
        {"GRAP / Landau-Zener", grap_landau_zener, false},
        {"FAQUAD consistency", faquad_consistency, false},
        {"demo initialization", demo_initialization, false},
        {"readout", readout, false},
        {"sensing", sensing, false},
        {"open-system hygiene", hygiene, false},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        if (c.paper && !s.paper) {
            fmt::print("SKIP  {}: long-running, enable with --paper\n", c.name);
            continue;
        }
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.check(s);
        } catch (const std::exception& ex) {
            o = {false, fmt::format("error: {}", ex.what())};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        fmt::print("{}  {}: {} [{:.0f} s]\n", o.pass ? "PASS" : "FAIL", c.name, o.detail, secs);
        if (!o.pass) ++failed;
    }
    return failed == 0 ? 0 : 1;
}
