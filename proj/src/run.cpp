#include "dipoleforge/run.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <sstream>

#include <fmt/format.h>

#include "dipoleforge/errors.hpp"
#include "dipoleforge/faquad.hpp"
#include "dipoleforge/grap_scan.hpp"
#include "dipoleforge/io.hpp"
#include "dipoleforge/open_system.hpp"
#include "dipoleforge/potential.hpp"
#include "dipoleforge/tdse.hpp"

namespace dipoleforge {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kMHz = two_pi * 1e6;

json scaled(std::initializer_list<double> values, double unit)
{
    json out = json::array();
    for (double v : values) out.push_back(v * unit);
    return out;
}

// ---------------------------------------------------------------------------
// typed access to the resolved config with dotted-path error names

class View {
public:
    explicit View(const json& root) : root_(root) {}

    const json& at(const std::string& path) const
    {
        const json* node = &root_;
        std::size_t start = 0;
        while (start <= path.size()) {
            const auto dot = path.find('.', start);
            const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
            if (!node->is_object() || !node->contains(key)) throw InputError(path, "missing");
            node = &node->at(key);
            if (dot == std::string::npos) break;
            start = dot + 1;
        }
        return *node;
    }

    bool is_null(const std::string& path) const { return at(path).is_null(); }

    double num(const std::string& path) const
    {
        const json& v = at(path);
        if (!v.is_number()) throw InputError(path, "expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) throw InputError(path, "must be finite");
        return x;
    }

    double positive(const std::string& path) const
    {
        const double x = num(path);
        if (!(x > 0.0)) throw InputError(path, "must be positive");
        return x;
    }

    double non_negative(const std::string& path) const
    {
        const double x = num(path);
        if (!(x >= 0.0)) throw InputError(path, "must be non-negative");
        return x;
    }

    std::optional<double> maybe(const std::string& path) const
    {
        if (is_null(path)) return std::nullopt;
        return num(path);
    }

    std::size_t index(const std::string& path) const
    {
        const json& v = at(path);
        if (!v.is_number_integer() || v.get<long long>() < 0)
            throw InputError(path, "expected a non-negative integer");
        return v.get<std::size_t>();
    }

    bool flag(const std::string& path) const
    {
        const json& v = at(path);
        if (!v.is_boolean()) throw InputError(path, "expected true or false");
        return v.get<bool>();
    }

    std::string str(const std::string& path) const
    {
        const json& v = at(path);
        if (!v.is_string()) throw InputError(path, "expected a string");
        return v.get<std::string>();
    }

    std::vector<double> nums(const std::string& path, bool positive_only = true) const
    {
        const json& v = at(path);
        if (!v.is_array() || v.empty()) throw InputError(path, "expected a non-empty array of numbers");
        std::vector<double> out;
        for (const auto& x : v) {
            if (!x.is_number()) throw InputError(path, "expected a non-empty array of numbers");
            out.push_back(x.get<double>());
            if (!std::isfinite(out.back()) || (positive_only && !(out.back() > 0.0)))
                throw InputError(path, positive_only ? "entries must be positive" : "entries must be finite");
        }
        return out;
    }

    std::pair<std::size_t, std::size_t> pair(const std::string& path) const
    {
        const json& v = at(path);
        if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer() ||
            v[0].get<long long>() < 0 || v[1].get<long long>() < 0)
            throw InputError(path, "expected two non-negative integers");
        return {v[0].get<std::size_t>(), v[1].get<std::size_t>()};
    }

private:
    const json& root_;
};

// ---------------------------------------------------------------------------

void check_schema(const json& value, const json& schema, const std::string& path)
{
    if (schema.is_object()) {
        if (!value.is_object()) throw InputError(path, "expected an object");
        for (const auto& [key, v] : value.items()) {
            const std::string sub = path.empty() ? key : path + "." + key;
            if (!schema.contains(key)) throw InputError(sub, "unknown key");
            check_schema(v, schema.at(key), sub);
        }
        return;
    }
    if (schema.is_null()) {
        if (!value.is_null() && !value.is_number()) throw InputError(path, "expected a number or null");
        return;
    }
    if (schema.is_number()) {
        if (!value.is_number()) throw InputError(path, "expected a number");
        if (schema.is_number_integer() && !value.is_number_integer()) throw InputError(path, "expected an integer");
        return;
    }
    if (schema.is_boolean() && !value.is_boolean()) throw InputError(path, "expected true or false");
    if (schema.is_string() && !value.is_string()) throw InputError(path, "expected a string");
    if (schema.is_array() && !value.is_array()) throw InputError(path, "expected an array");
}

// Like merge_patch, but null is a value rather than a deletion.
void deep_merge(json& target, const json& patch)
{
    if (!patch.is_object() || !target.is_object()) {
        target = patch;
        return;
    }
    for (const auto& [key, v] : patch.items()) deep_merge(target[key], v);
}

json parse_override_value(const std::string& text)
{
    try {
        return json::parse(text);
    } catch (const json::parse_error&) {
        return text;
    }
}

void apply_override(json& config, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw InputError("--set", fmt::format("'{}' is not key=value", assignment));
    const std::string path = assignment.substr(0, eq);
    json patch = parse_override_value(assignment.substr(eq + 1));
    std::vector<std::string> keys;
    std::stringstream ss(path);
    for (std::string k; std::getline(ss, k, '.');) keys.push_back(k);
    for (auto it = keys.rbegin(); it != keys.rend(); ++it) patch = json{{*it, patch}};
    deep_merge(config, patch);
}

// ---------------------------------------------------------------------------

struct Context {
    json config;
    View cfg;
    fs::path dir;
    unsigned jobs;
    json outputs = json::array();
    json audits = json::object();
    json results = json::object();
    json notes = json::array();

    Context(json c, fs::path d, unsigned j) : config(std::move(c)), cfg(config), dir(std::move(d)), jobs(j) {}

    void write_csv(const std::string& name, const CsvTable& table)
    {
        write_atomic(dir / name, table.text());
        outputs.push_back({{"file", name}, {"rows", table.rows()}, {"columns", table.columns()}});
    }

    void write_json(const std::string& name, const json& body)
    {
        write_atomic(dir / name, body.dump(2) + "\n");
        outputs.push_back({{"file", name}, {"rows", body.is_array() ? body.size() : 1}});
    }
};

PotentialSpec family(const View& cfg)
{
    try {
        const double d = cfg.num("potential.d_m");
        const double omega = cfg.num("potential.omega_h_prime_rad_s");
        if (cfg.is_null("potential.a3_V_per_m3") != cfg.is_null("potential.a4_V_per_m4"))
            throw InputError("potential.a3_V_per_m3", "give both a3 and a4 or neither");
        if (cfg.is_null("potential.a3_V_per_m3")) return build_potential(d, omega);
        return potential_from_json({{"a2_V_per_m2", 0.0},
                                    {"a3_V_per_m3", cfg.num("potential.a3_V_per_m3")},
                                    {"a4_V_per_m4", cfg.num("potential.a4_V_per_m4")},
                                    {"d_m", d},
                                    {"omega_h_prime_rad_s", omega}});
    } catch (const InputError& e) {
        if (e.field().rfind("potential.", 0) == 0) throw;
        throw InputError("potential." + e.field(), std::string(e.what()).substr(e.field().size() + 2));
    }
}

double a2_prime(const PotentialSpec& f) { return harmonic_coefficient(f.omega_h_prime); }

Grid grid(const View& cfg, const PotentialSpec& f)
{
    const std::size_t n = cfg.index("grid.n_points");
    if (n < 16) throw InputError("grid.n_points", "needs at least 16 points");
    Grid g = default_grid(f, n);
    if (auto v = cfg.maybe("grid.z_min_m")) g.z_min = *v;
    if (auto v = cfg.maybe("grid.z_max_m")) g.z_max = *v;
    if (!(g.z_max > g.z_min)) throw InputError("grid.z_max_m", "must exceed grid.z_min_m");
    return g;
}

json grid_json(const Grid& g) { return {{"z_min_m", g.z_min}, {"z_max_m", g.z_max}, {"n_points", g.n_points}}; }

json resolution_json(const ResolutionReport& r)
{
    return {{"estimated_energy_J", r.estimated_energy},
            {"min_points_per_wavelength", r.min_points_per_wavelength},
            {"required_points", r.required_points},
            {"left_decay", r.left_decay},
            {"right_decay", r.right_decay},
            {"resolution_ok", r.resolution_ok},
            {"domain_ok", r.domain_ok}};
}

json window_audit(const EigenWindow& w)
{
    double worst = 0.0;
    for (double r : w.residual_norms) worst = std::max(worst, r);
    return {{"n_lo", w.n_lo},
            {"n_hi", w.n_hi},
            {"max_residual", worst},
            {"flagged", w.flagged},
            {"node_audit_failures", w.node_audit_failures},
            {"orthonormality_error", w.orthonormality_error}};
}

json hygiene_json(const Hygiene& h)
{
    return {{"runs", h.runs},
            {"steps", h.steps},
            {"max_trace_error", h.max_trace_error},
            {"max_hermiticity_error", h.max_hermiticity_error},
            {"min_eigenvalue", h.min_eigenvalue},
            {"ok", h.ok()}};
}

NoiseSpec noise(const View& cfg)
{
    NoiseSpec n;
    n.s0 = cfg.non_negative("noise.s0_V2_per_m2_Hz");
    n.omega0 = cfg.positive("noise.omega0_rad_s");
    n.alpha = cfg.num("noise.alpha");
    return n;
}

json noise_json(const NoiseSpec& n, double scale)
{
    return {{"s0_V2_per_m2_Hz", n.s0},
            {"omega0_rad_s", n.omega0},
            {"alpha", n.alpha},
            {"scale", scale},
            {"rate_convention", "Gamma_i->j = e^2 |z_ij|^2 S_E(|w_ij|) / (2 hbar^2), symmetric up/down"}};
}

MasterOptions master_options(const View& cfg, const std::string& section)
{
    MasterOptions o;
    o.frame = parse_frame(cfg.str(section + ".frame"));
    o.rwa_cutoff = cfg.non_negative(section + ".rwa_cutoff_rad_s");
    o.dt = cfg.non_negative(section + ".dt_s");
    return o;
}

// Motional model around the configured pair; the window carries guard states for the detuning search.
struct ModelBundle {
    TruncatedModel model;
    double detuning;  // rad/s
    json audit;
};

ModelBundle build_model(const Context& ctx, const std::string& section)
{
    const View& cfg = ctx.cfg;
    const auto f = family(cfg);
    const Grid g = grid(cfg, f);
    const auto [k_lo, k_hi] = cfg.pair(section + ".basis");
    const auto [n, n_prime] = cfg.pair(section + ".tls");
    if (k_hi <= k_lo) throw InputError(section + ".basis", "needs k_lo < k_hi");
    const double a2 = cfg.non_negative(section + ".a2_fraction") * a2_prime(f);
    SolveOptions so;
    so.jobs = ctx.jobs;
    const std::size_t lo = k_lo >= 5 ? k_lo - 5 : 0;
    const auto w = solve_window(f.with_a2(a2), g, lo, k_hi + 5, so);
    const auto table = dipole_table(w, k_hi + 5 - lo);
    ModelBundle b;
    try {
        b.model = truncated_model(table, k_lo, k_hi, n, n_prime);
    } catch (const InputError& e) {
        throw InputError(section + "." + e.field(), std::string(e.what()).substr(e.field().size() + 2));
    }
    b.detuning = effective_detuning(table, n, n_prime, 5);
    b.audit = window_audit(w);
    b.audit["grid"] = grid_json(g);
    b.audit["a2_V_per_m2"] = a2;
    return b;
}

json model_json(const ModelBundle& b, const LindbladSet& l)
{
    const auto& m = b.model;
    return {{"basis", {m.k_lo, m.k_hi}},
            {"tls", {m.n, m.n_prime}},
            {"omega_tls_rad_s", m.omega_tls()},
            {"z_tls_m", m.z_tls()},
            {"mu_tls_e_um", m.mu_tls()},
            {"effective_detuning_rad_s", b.detuning},
            {"gamma_tls_per_s", l.rates(m.pos(m.n), m.pos(m.n_prime))},
            {"leakage_rate_estimate_per_s", leakage_rate_estimate(m, l)},
            {"max_out_rate_per_s", l.max_rate()},
            {"warnings", l.warnings}};
}

// ---------------------------------------------------------------------------

void run_spectrum(Context& ctx)
{
    const View& cfg = ctx.cfg;
    const auto f = family(cfg);
    const Grid g = grid(cfg, f);
    const double a2 = cfg.non_negative("spectrum.a2_fraction") * a2_prime(f);
    const std::size_t n_lo = cfg.index("spectrum.n_lo"), n_hi = cfg.index("spectrum.n_hi");
    if (n_hi < n_lo) throw InputError("spectrum.n_hi", "must not be below spectrum.n_lo");
    const auto spec = f.with_a2(a2);
    const AxialPolynomial poly = cfg.flag("potential.radial.enabled")
                                     ? axial_polynomial(spec, RadialSpec{cfg.positive("potential.radial.omega_x_rad_s"),
                                                                         cfg.positive("potential.radial.omega_y_rad_s")})
                                     : axial_polynomial(spec);

    SolveOptions so;
    so.jobs = ctx.jobs;
    so.dipole_band = std::max<std::size_t>(cfg.index("spectrum.dipole_band"), 1);
    so.keep_wavefunctions = cfg.flag("spectrum.export_wavefunctions");
    so.node_audit_stride = cfg.index("spectrum.node_audit_stride");
    const auto w = solve_window(poly, g, n_lo, n_hi, so);
    ctx.audits["window"] = window_audit(w);
    ctx.audits["resolution"] = resolution_json(check_resolution(poly, g, n_hi));

    CsvTable energies({"n", "energy_J", "residual"});
    for (std::size_t n = n_lo; n <= n_hi; ++n) energies.row(n, w.energy(n), w.residual_norms[n - n_lo]);
    ctx.write_csv("energies.csv", energies);

    const auto curve = transition_curve(w);
    CsvTable tc({"n", "omega_rad_s", "edm_C_m"});
    for (const auto& r : curve) tc.row(r.n, r.omega, r.edm * 1e-6 * PhysConsts::elementary_charge);
    ctx.write_csv("transition_curve.csv", tc);

    const auto table = dipole_table(w, so.dipole_band);
    CsvTable dip({"i", "j", "z_m"});
    for (std::size_t i = n_lo; i <= n_hi; ++i)
        for (std::size_t j = i + 1; j <= std::min(n_hi, i + so.dipole_band); ++j) dip.row(i, j, table.z(i, j));
    ctx.write_csv("dipoles.csv", dip);

    if (so.keep_wavefunctions) {
        std::vector<std::string> header{"z_m"};
        for (std::size_t n = n_lo; n <= n_hi; ++n) header.push_back(fmt::format("psi_{}_per_sqrt_m", n));
        CsvTable wf(header);
        for (std::size_t i = 0; i < g.n_points; ++i) {
            std::string line = fmt::format("{}", g.z(i));
            for (std::size_t n = n_lo; n <= n_hi; ++n) line += fmt::format(",{}", w.wavefunction(n)[i] * 1e3);
            wf.raw_row(line);
        }
        ctx.write_csv("wavefunctions.csv", wf);
    }

    json summary = {{"a2_V_per_m2", a2}, {"potential", to_json(spec)}, {"grid", grid_json(g)}};
    if (!curve.empty()) {
        double edm_min = curve.front().edm, edm_max = edm_min;
        for (const auto& r : curve) {
            edm_min = std::min(edm_min, r.edm);
            edm_max = std::max(edm_max, r.edm);
        }
        summary["edm_min_e_um"] = edm_min;
        summary["edm_max_e_um"] = edm_max;
        summary["omega_first_rad_s"] = curve.front().omega;
        summary["omega_last_rad_s"] = curve.back().omega;
    }

    if (cfg.flag("spectrum.grid_doubling")) {
        SolveOptions fine = so;
        fine.keep_wavefunctions = false;
        fine.dipole_band = 1;
        const auto wf = solve_window(poly, g.refined(), n_lo, n_hi, fine);
        const auto fine_curve = transition_curve(wf);
        double worst = 0.0;
        for (std::size_t k = 0; k < curve.size(); ++k)
            worst = std::max(worst, std::abs(fine_curve[k].omega / curve[k].omega - 1.0));
        ctx.audits["grid_doubling"] = {{"n_points", g.refined().n_points}, {"max_rel_change_omega", worst}};
    }
    ctx.results = summary;
}

std::vector<Grap> run_grap_scan(Context& ctx, const PotentialSpec& f, const Grid& g, bool write)
{
    const View& cfg = ctx.cfg;
    const double ap = a2_prime(f);
    const double from = cfg.non_negative("scan.a2_from_fraction") * ap;
    const double to = cfg.non_negative("scan.a2_to_fraction") * ap;
    ScanOptions opts;
    opts.jobs = ctx.jobs;
    opts.refine = cfg.flag("scan.refine");
    opts.branch_map = cfg.flag("scan.branch_map");
    opts.locate_tolerance = cfg.positive("scan.locate_tolerance");
    opts.grap.gap_ceiling = cfg.positive("scan.gap_ceiling_rad_s");
    const std::size_t steps = cfg.index("scan.steps");
    if (steps < 2) throw InputError("scan.steps", "needs at least 2 steps");
    const std::size_t n_lo = cfg.index("scan.n_lo"), n_hi = cfg.index("scan.n_hi");
    if (n_hi <= n_lo) throw InputError("scan.n_hi", "must exceed scan.n_lo");
    SolveOptions so;
    so.node_audit_stride = 0;
    const auto scan = scan_a2(f, from, to, steps, n_lo, n_hi, g, opts, so);
    const auto graps = detect_graps(scan, opts.grap);

    json list = json::array();
    for (const auto& gp : graps)
        list.push_back({{"a2_star", gp.a2_star},
                        {"lower_index", gp.lower_index},
                        {"gap_rad_s", gp.gap},
                        {"width_V_per_m2", gp.width()},
                        {"curvature", gp.curvature}});
    ctx.audits["scan"] = {{"columns", scan.columns()}, {"n_lo", n_lo}, {"n_hi", n_hi}, {"grid", grid_json(g)}};
    if (write) {
        CsvTable t({"a2_V_per_m2", "n", "energy_J"});
        for (std::size_t c = 0; c < scan.columns(); ++c)
            for (std::size_t k = 0; k < scan.width(); ++k) t.row(scan.a2_values[c], n_lo + k, scan.energies[c][k]);
        ctx.write_csv("scan.csv", t);
        ctx.write_json("graps.json", list);
    }
    ctx.results["graps"] = list;
    return graps;
}

void run_scan(Context& ctx)
{
    const View& cfg = ctx.cfg;
    const auto f = family(cfg);
    const Grid g = grid(cfg, f);
    const auto graps = run_grap_scan(ctx, f, g, true);
    if (!cfg.flag("scan.landau_zener.enabled")) return;

    const std::size_t lower = cfg.index("scan.landau_zener.lower_index");
    const auto near = cfg.maybe("scan.landau_zener.near_fraction");
    const Grap* pick = nullptr;
    for (const auto& gp : graps) {
        if (gp.lower_index != lower) continue;
        if (!pick || (near && std::abs(gp.a2_star - *near * a2_prime(f)) < std::abs(pick->a2_star - *near * a2_prime(f))))
            pick = &gp;
    }
    if (!pick)
        throw Refusal("landau-zener", fmt::format("no GRAP with lower index {} in the scan", lower),
                      "adjust scan.landau_zener.lower_index or the scan range");
    LandauZenerOptions lz;
    lz.half_span_widths = cfg.positive("scan.landau_zener.half_span_widths");
    CsvTable t({"target_probability", "sweep_rate_V_per_m2_s", "p_diabatic_tdse", "p_landau_zener"});
    const double c = std::sqrt(pick->curvature * pick->gap);
    double worst = 0.0;
    for (double p : cfg.nums("scan.landau_zener.probabilities")) {
        if (!(p < 1.0)) throw InputError("scan.landau_zener.probabilities", "entries must lie in (0, 1)");
        const double rate = -std::numbers::pi * pick->gap * pick->gap / (2.0 * c * std::log(1.0 / p));
        const auto r = landau_zener_check(*pick, rate, f, g, lz);
        t.row(p, rate, r.p_diabatic_tdse, r.p_landau_zener);
        worst = std::max(worst, std::abs(r.p_diabatic_tdse - r.p_landau_zener));
    }
    ctx.write_csv("landau_zener.csv", t);
    ctx.results["landau_zener"] = {{"a2_star", pick->a2_star},
                                   {"lower_index", pick->lower_index},
                                   {"gap_rad_s", pick->gap},
                                   {"max_abs_deviation", worst}};
}

void write_schedule(Context& ctx, const std::string& name, const Schedule& s)
{
    CsvTable t({"t_s", "a2_V_per_m2", "stage"});
    for (std::size_t k = 0; k < s.times.size(); ++k) t.row(s.times[k], s.a2[k], s.stage.empty() ? 1 : s.stage[k]);
    ctx.write_csv(name, t);
}

void run_faquad(Context& ctx)
{
    const View& cfg = ctx.cfg;
    const auto f = family(cfg);
    const double ap = a2_prime(f);
    const double a0 = cfg.positive("faquad.a2_start_fraction") * ap;
    const double a1 = cfg.positive("faquad.a2_end_fraction") * ap;
    if (!(a1 < a0)) throw InputError("faquad.a2_end_fraction", "must be below faquad.a2_start_fraction");
    const double eps = cfg.positive("faquad.epsilon");
    const std::size_t ref = cfg.index("faquad.ref_index"), band = cfg.index("faquad.band");
    const std::string mode = cfg.str("faquad.mode");

    std::unique_ptr<SpectrumProvider> provider;
    if (mode == "right-well-harmonic")
        provider = std::make_unique<HarmonicProvider>(ref, band);
    else if (mode == "right-well")
        provider = std::make_unique<RightWellProvider>(f, cfg.index("grid.n_points"), ref, band);
    else if (mode == "full-potential")
        provider = std::make_unique<FullPotentialProvider>(f, grid(cfg, f), ref, band);
    else
        throw InputError("faquad.mode", "one of right-well-harmonic, right-well, full-potential");

    const auto s = faquad_schedule(*provider, a0, a1, eps);
    write_schedule(ctx, "schedule.csv", s);
    json body = {{"mode", mode},
                 {"epsilon", eps},
                 {"a2_start_V_per_m2", a0},
                 {"a2_end_V_per_m2", a1},
                 {"duration_s", s.duration()},
                 {"duration_times_epsilon_s", s.duration() * eps},
                 {"samples", s.times.size()}};
    if (mode == "right-well-harmonic" && ref == 0) {
        double worst = 0.0;
        for (std::size_t k = 1; k < s.times.size(); ++k)
            worst = std::max(worst, std::abs(s.times[k] / stage1_time_to(a0, eps, s.a2[k]) - 1.0));
        body["closed_form_max_rel_deviation"] = worst;
        ctx.audits["closed_form_max_rel_deviation"] = worst;
    }
    ctx.write_json("faquad.json", body);
    ctx.results = body;
}

void run_evolve(Context& ctx)
{
    const View& cfg = ctx.cfg;
    InitProtocol p;
    p.family = family(cfg);
    p.grid = grid(cfg, p.family);
    const double ap = a2_prime(p.family);
    p.a2_start = cfg.positive("evolve.a2_start_fraction") * ap;
    p.a2_end = cfg.non_negative("evolve.a2_end_fraction") * ap;
    p.stage2_epsilon = cfg.positive("evolve.stage2_epsilon");
    p.faquad_band = cfg.index("evolve.faquad_band");
    p.dt = cfg.non_negative("evolve.dt_s");
    const double t1 = cfg.positive("evolve.t1_s");
    const double t2 = cfg.positive("evolve.t2_s");

    json choice;
    if (cfg.is_null("evolve.target_index") != cfg.is_null("evolve.a2_m_fraction"))
        throw InputError("evolve.target_index", "give target_index and a2_m_fraction together or neither");
    if (!cfg.is_null("evolve.target_index")) {
        p.target_index = static_cast<std::size_t>(cfg.num("evolve.target_index"));
        p.a2_m = cfg.positive("evolve.a2_m_fraction") * ap;
        choice = {{"source", "config"}};
    } else {
        const auto graps = run_grap_scan(ctx, p.family, p.grid, true);
        const auto c = choose_stage_boundary(graps, t1);
        p.target_index = c.target_index;
        p.a2_m = c.a2_m;
        choice = {{"source", "grap-scan"}, {"crossed", c.crossed}, {"threshold_rad_s", 1.0 / t1}};
    }
    choice["target_index"] = p.target_index;
    choice["a2_m_V_per_m2"] = p.a2_m;
    p.validate();

    const Schedule shape = stage2_shape(p);
    const Schedule ref = init_schedule(p, t1, t2, &shape);
    write_schedule(ctx, "schedule.csv", ref);
    const double dt = p.dt > 0.0 ? p.dt : default_init_dt(p);
    const double f_ref = initialization_fidelity(p, ref);

    json body = {{"stage_boundary", choice},
                 {"t1_s", t1},
                 {"t2_s", t2},
                 {"t_m_s", ref.t_m},
                 {"total_s", ref.duration()},
                 {"stage2_epsilon_shape", p.stage2_epsilon},
                 {"stage2_epsilon", shape.empty() ? 0.0 : shape.epsilon * shape.duration() / t2},
                 {"dt_s", dt},
                 {"fidelity", f_ref},
                 {"diabatic_floor", initialization_fidelity(p, 0.0, 0.0)}};
    if (cfg.flag("evolve.dt_halving")) {
        InitProtocol half = p;
        half.dt = 0.5 * dt;
        const double f_half = initialization_fidelity(half, ref);
        body["fidelity_half_dt"] = f_half;
        ctx.audits["dt_halving_shift"] = std::abs(f_half - f_ref);
    }

    const std::string axis_name = cfg.str("evolve.scan_axis");
    if (axis_name != "none") {
        FidelityScan::Axis axis;
        if (axis_name == "t1")
            axis = FidelityScan::Axis::t1;
        else if (axis_name == "t2")
            axis = FidelityScan::Axis::t2;
        else
            throw InputError("evolve.scan_axis", "one of t1, t2, none");
        const auto values = cfg.nums("evolve.scan_values_s");
        const auto scan = fidelity_scan(p, axis, values, axis == FidelityScan::Axis::t1 ? t2 : t1, ctx.jobs);
        CsvTable t({"axis_value_s", "fidelity"});
        for (std::size_t k = 0; k < values.size(); ++k) t.row(values[k], scan.fidelities[k]);
        ctx.write_csv("fidelity_scan.csv", t);
        const std::size_t best = scan.argmax();
        body["scan"] = {{"axis", axis_name},
                        {"argmax_s", values[best]},
                        {"max_fidelity", scan.fidelities[best]},
                        {"interior_maximum", best > 0 && best + 1 < values.size()}};
    }

    if (const std::size_t stride = cfg.index("evolve.snapshot_stride"); stride > 0) {
        const auto w0 = solve_window(p.family.with_a2(p.a2_start), p.grid, 0, 0);
        CsvTable snaps({"t_s", "a2_V_per_m2", "z_m", "density_per_m"});
        PropagateOptions opt;
        opt.band_halfwidth = init_band(p);
        opt.observer_stride = stride;
        const std::size_t every = std::max<std::size_t>(1, p.grid.n_points / 512);
        opt.observer = [&](const WaveState& s, double a2) {
            for (std::size_t i = 0; i < s.psi.size(); i += every)
                snaps.row(s.time, a2, s.grid.z(i), std::norm(s.psi[i]) * 1e6);
        };
        propagate(make_state(p.grid, w0.wavefunction(0)), p.family, ref, dt, opt);
        ctx.write_csv("snapshots.csv", snaps);
    }

    ctx.write_json("evolve.json", body);
    ctx.results.update(body);
}

void run_readout(Context& ctx)
{
    const View& cfg = ctx.cfg;
    const auto b = build_model(ctx, "readout");
    const NoiseSpec ns = noise(cfg);
    const double scale = cfg.non_negative("noise.scale");
    const LindbladSet l = cfg.flag("readout.noise") ? noise_rates(b.model, ns).scaled(scale) : no_noise(b.model);
    const MasterOptions opt = master_options(cfg, "readout");
    const double phi_b = cfg.num("readout.phi_b_rad");
    const auto times = cfg.nums("readout.transfer_times_s");

    const auto curve = readout_scan(b.model, l, times, phi_b, opt, ctx.jobs);
    CsvTable t({"transfer_time_s", "F_avg", "F_plus", "F_minus", "b_y_T_per_m"});
    for (const auto& pt : curve.points) t.row(pt.transfer_time, pt.f_avg, pt.f_plus, pt.f_minus, pt.b_y);
    ctx.write_csv("readout.csv", t);

    Hygiene hy = curve.hygiene();
    const auto best = curve.points[curve.argmax()];
    json body = {{"model", model_json(b, l)},
                 {"frame", to_string(opt.frame)},
                 {"noise", noise_json(ns, cfg.flag("readout.noise") ? scale : 0.0)},
                 {"optimum", {{"transfer_time_s", best.transfer_time}, {"F_avg", best.f_avg}, {"b_y_T_per_m", best.b_y}}},
                 {"interior_maximum", curve.interior_maximum()},
                 {"reference", {{"transfer_time_s", 180e-9}, {"F_avg", 0.952}}}};

    // bare two-level system in the rotating frame, no noise
    const auto tl = two_level_model(b.model.omega_tls(), b.model.z_tls());
    const auto ideal = readout_transfer(tl, no_noise(tl), best.b_y, phi_b);
    hy.merge(ideal.hygiene);
    body["two_level_noiseless_F_avg"] = ideal.f_avg;

    if (cfg.flag("readout.compare_lab") && opt.frame == Frame::rwa) {
        MasterOptions lab = opt;
        lab.frame = Frame::lab;
        lab.dt = 0.0;
        const auto r = readout_transfer(b.model, l, best.b_y, phi_b, lab);
        hy.merge(r.hygiene);
        body["lab_frame_at_optimum"] = {{"F_avg", r.f_avg}, {"F_plus", r.f_plus}, {"F_minus", r.f_minus}};
    }
    ctx.audits["eigen_window"] = b.audit;
    ctx.audits["hygiene"] = hygiene_json(hy);
    ctx.write_json("readout.json", body);
    ctx.results = body;
}

void run_sense(Context& ctx)
{
    const View& cfg = ctx.cfg;
    const auto b = build_model(ctx, "sense");
    const NoiseSpec ns = noise(cfg);
    const double scale = cfg.non_negative("noise.scale");
    const LindbladSet l = noise_rates(b.model, ns).scaled(scale);
    const MasterOptions opt = master_options(cfg, "sense");
    const auto times = cfg.nums("sense.times_s");
    const double t_max = *std::max_element(times.begin(), times.end());

    auto delta_for = [&](const TruncatedModel& m) {
        const double given = cfg.non_negative("sense.delta_e_V_per_m");
        if (given > 0.0) return given;
        return 0.02 * PhysConsts::hbar / (PhysConsts::elementary_charge * std::abs(m.z_tls()) * t_max);
    };

    CsvTable chi({"t_s", "susceptibility_per_V_m", "branch"});
    CsvTable leak({"t_s", "leakage_population", "branch"});
    Hygiene hy;
    json branches = json::object();
    auto record = [&](const std::string& name, const SusceptibilityCurve& c, double mu) {
        for (std::size_t k = 0; k < c.times.size(); ++k) chi.row(c.times[k], c.numeric[k], name);
        for (std::size_t k = 0; k < c.times.size(); ++k) chi.row(c.times[k], c.analytic[k], name + "_analytic_fit");
        for (std::size_t k = 0; k < c.times.size(); ++k) leak.row(c.times[k], c.leakage[k], name);
        hy.merge(c.hygiene);
        const std::size_t best = c.argmax();
        branches[name] = {{"mu_e_um", mu},
                          {"gamma_fit_per_s", c.gamma_fit},
                          {"gamma_leakage_estimate_per_s", c.gamma_leakage_estimate},
                          {"argmax_t_s", c.times[best]},
                          {"max_susceptibility_per_V_m", c.numeric[best]},
                          {"interior_maximum", c.interior_maximum()}};
    };

    const auto tls = susceptibility(b.model, l, times, delta_for(b.model), opt, ctx.jobs);
    record("tls", tls, b.model.mu_tls());

    const double w_giant = cfg.positive("sense.giant_dipole.omega_rad_s");
    const double mu_giant = cfg.positive("sense.giant_dipole.mu_e_um");
    auto two_level = [&](double mu) {
        const auto m = two_level_model(w_giant, mu * 1e-6);
        return susceptibility(m, noise_rates(m, ns).scaled(scale), times, delta_for(m), opt, ctx.jobs);
    };
    auto noiseless = [&](const std::string& name, double mu) {
        const auto m = two_level_model(w_giant, mu * 1e-6);
        const auto c = susceptibility(m, no_noise(m), times, delta_for(m), opt, ctx.jobs);
        for (std::size_t k = 0; k < c.times.size(); ++k) chi.row(c.times[k], c.numeric[k], name + "_noiseless");
        hy.merge(c.hygiene);
    };
    record("giant_dipole", two_level(mu_giant), mu_giant);
    noiseless("giant_dipole", mu_giant);
    for (double mu : cfg.nums("sense.comparator_dipoles_e_um")) {
        const std::string name = fmt::format("dipole_{}_e_um", mu);
        record(name, two_level(mu), mu);
        noiseless(name, mu);
    }
    for (double t : times) chi.row(t, ideal_susceptibility(mu_giant, t), "giant_dipole_ideal");

    ctx.write_csv("susceptibility.csv", chi);
    ctx.write_csv("leakage.csv", leak);

    const double field = cfg.non_negative("sense.rabi.e_amplitude_V_per_m");
    json rabi_json;
    if (field > 0.0) {
        const auto rt = cfg.nums("sense.rabi.times_s");
        CsvTable rabi({"t_s", "p", "leakage_population"});
        std::vector<SenseResult> rs(rt.size());
        for (std::size_t k = 0; k < rt.size(); ++k) rs[k] = sense(b.model, l, field, 0.0, rt[k], opt);
        for (std::size_t k = 0; k < rt.size(); ++k) {
            rabi.row(rt[k], rs[k].p, rs[k].leakage);
            hy.merge(rs[k].hygiene);
        }
        ctx.write_csv("rabi.csv", rabi);
        rabi_json = {{"e_amplitude_V_per_m", field},
                     {"rabi_frequency_rad_s", rs.front().rabi_frequency},
                     {"leakage_regime", rs.front().leakage_regime}};
        if (rs.front().leakage_regime)
            ctx.notes.push_back("Rabi frequency exceeds a fifth of the effective detuning; leakage dominates p");
    }

    json body = {{"model", model_json(b, l)},
                 {"frame", to_string(opt.frame)},
                 {"noise", noise_json(ns, scale)},
                 {"branches", branches},
                 {"rabi", rabi_json},
                 {"gamma_note", "Gamma in the analytic curve is fitted to the numeric curve, not derived"}};
    ctx.audits["eigen_window"] = b.audit;
    ctx.audits["hygiene"] = hygiene_json(hy);
    ctx.write_json("sense.json", body);
    ctx.results = body;
}

}  // namespace

// ---------------------------------------------------------------------------

const std::vector<std::string>& experiments()
{
    static const std::vector<std::string> names{"spectrum", "scan", "faquad", "evolve", "readout", "sense"};
    return names;
}

json default_config(const std::string& scale)
{
    if (scale != "demo" && scale != "paper") throw InputError("scale", "one of demo, paper");
    const bool paper = scale == "paper";
    const double ns = 1e-9, us = 1e-6;
    json c = {
        {"scale", scale},
        {"potential",
         {{"d_m", paper ? 40e-6 : 5e-6},
          {"omega_h_prime_rad_s", two_pi * 300e6},
          {"a3_V_per_m3", nullptr},
          {"a4_V_per_m4", nullptr},
          {"radial", {{"enabled", false}, {"omega_x_rad_s", two_pi * 1e9}, {"omega_y_rad_s", two_pi * 1e9}}}}},
        {"grid", {{"n_points", paper ? (1 << 19) : 8192}, {"z_min_m", nullptr}, {"z_max_m", nullptr}}},
        {"noise", {{"s0_V2_per_m2_Hz", 1e-12}, {"omega0_rad_s", kMHz}, {"alpha", 1.3}, {"scale", 1.0}}},
        {"spectrum",
         {{"a2_fraction", 0.0},
          {"n_lo", paper ? 3679 : 0},
          {"n_hi", paper ? 4080 : 60},
          {"dipole_band", 1},
          {"node_audit_stride", paper ? 50 : 1},
          {"grid_doubling", paper},
          {"export_wavefunctions", false}}},
        {"scan",
         {{"a2_from_fraction", paper ? 0.02 : 0.25},
          {"a2_to_fraction", paper ? 0.0 : 0.14},
          {"steps", paper ? 80 : 120},
          {"n_lo", paper ? 3556 : 0},
          {"n_hi", paper ? 3576 : 16},
          {"gap_ceiling_rad_s", 30.0 * kMHz},
          {"locate_tolerance", 0.01},
          {"refine", true},
          {"branch_map", false},
          {"landau_zener",
           {{"enabled", !paper},
            {"lower_index", 8},
            {"near_fraction", 0.1805},
            {"probabilities", {0.1, 0.5, 0.9}},
            {"half_span_widths", 20.0}}}}},
        {"faquad",
         {{"mode", "right-well-harmonic"},
          {"a2_start_fraction", 1.0},
          {"a2_end_fraction", 0.15},
          {"epsilon", 0.1},
          {"ref_index", 0},
          {"band", 6}}},
        {"evolve",
         {{"a2_start_fraction", 1.0},
          {"a2_end_fraction", paper ? 0.0 : 0.15},
          {"t1_s", paper ? 199.4 * ns : 40 * ns},
          {"t2_s", paper ? 1.75 * us : 400 * ns},
          {"target_index", nullptr},
          {"a2_m_fraction", nullptr},
          {"stage2_epsilon", 0.05},
          {"faquad_band", 6},
          {"dt_s", 0.0},
          {"dt_halving", true},
          {"scan_axis", "t1"},
          {"scan_values_s", scaled({2, 5, 10, 20, 40, 80, 160, 320}, ns)},
          {"snapshot_stride", 0}}},
        {"readout",
         {{"a2_fraction", 0.0},
          {"basis", paper ? json{3561, 3575} : json{35, 49}},
          {"tls", paper ? json{3566, 3565} : json{43, 42}},
          {"frame", "rwa"},
          {"rwa_cutoff_rad_s", 0.0},
          {"dt_s", 0.0},
          {"phi_b_rad", 0.0},
          {"noise", true},
          {"compare_lab", true},
          {"transfer_times_s", scaled({30, 50, 80, 120, 180, 300, 500, 800, 1500, 3000, 6000, 12000}, ns)}}},
        {"sense",
         {{"a2_fraction", 0.0},
          {"basis", paper ? json{3561, 3575} : json{35, 49}},
          {"tls", paper ? json{3566, 3565} : json{43, 42}},
          {"frame", "rwa"},
          {"rwa_cutoff_rad_s", 0.0},
          {"dt_s", 0.0},
          {"times_s", scaled({0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1, 1.5, 2, 3, 4, 6, 8, 12, 16, 20}, us)},
          {"delta_e_V_per_m", 0.0},
          {"giant_dipole", {{"omega_rad_s", 59.9 * kMHz}, {"mu_e_um", 7.16}}},
          {"comparator_dipoles_e_um", {1.0, 2.0, 3.0}},
          {"rabi",
           {{"e_amplitude_V_per_m", 8e-4},
            {"times_s", scaled({0.25, 0.5, 0.75, 1, 1.25, 1.5, 1.75, 2, 2.5, 3, 3.5, 4, 4.5, 5, 5.5, 6}, us)}}}}},
    };
    return c;
}

json resolve_config(const RunRequest& request)
{
    std::string scale = request.scale_flag;
    if (!request.config.is_null() && !request.config.is_object()) throw InputError("config", "expected a JSON object");
    if (scale.empty() && request.config.contains("scale")) {
        if (!request.config.at("scale").is_string()) throw InputError("scale", "expected a string");
        scale = request.config.at("scale").get<std::string>();
    }
    for (const auto& o : request.overrides)
        if (o.rfind("scale=", 0) == 0 && request.scale_flag.empty()) scale = parse_override_value(o.substr(6)).dump();
    if (!scale.empty() && scale.front() == '"') scale = scale.substr(1, scale.size() - 2);
    if (scale.empty()) scale = "demo";
    json config = default_config(scale);
    const json schema = config;
    if (!request.config.is_null()) {
        check_schema(request.config, schema, "");
        deep_merge(config, request.config);
    }
    for (const auto& o : request.overrides) apply_override(config, o);
    check_schema(config, schema, "");
    if (config.at("scale") != scale) throw InputError("scale", "conflicts with --scale");
    if (scale == "paper" && request.scale_flag != "paper")
        throw InputError("scale", "paper scale runs for a long time; pass --scale paper to confirm");
    return config;
}

fs::path output_directory(const RunRequest& request)
{
    if (!request.out.empty()) return request.out;
    const char* root = std::getenv("DIPOLEFORGE_OUT");
    return fs::path(root && *root ? root : "runs") / request.experiment;
}

json run(const RunRequest& request)
{
    const auto& names = experiments();
    if (std::find(names.begin(), names.end(), request.experiment) == names.end())
        throw InputError("experiment", fmt::format("unknown experiment '{}'", request.experiment));
    const auto start = std::chrono::steady_clock::now();
    Context ctx(resolve_config(request), output_directory(request), std::max(1u, request.jobs));
    fs::create_directories(ctx.dir);
    fs::remove(ctx.dir / "error.json");

    const std::string& e = request.experiment;
    if (e == "spectrum")
        run_spectrum(ctx);
    else if (e == "scan")
        run_scan(ctx);
    else if (e == "faquad")
        run_faquad(ctx);
    else if (e == "evolve")
        run_evolve(ctx);
    else if (e == "readout")
        run_readout(ctx);
    else
        run_sense(ctx);

    ctx.notes.push_back(
        "ideal polynomial potential; figures of the reference work use a 3D-corrected potential, so magnitudes are "
        "compared with loose (15%) tolerances");
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json manifest = {{"experiment", e},
                     {"scale", ctx.config.at("scale")},
                     {"version", {{"dipoleforge", version_string}, {"compiler", __VERSION__}, {"cxx", __cplusplus}}},
                     {"config", ctx.config},
                     {"jobs", ctx.jobs},
                     {"wall_time_s", wall},
                     {"audits", ctx.audits},
                     {"results", ctx.results},
                     {"outputs", ctx.outputs},
                     {"notes", ctx.notes}};
    write_atomic(ctx.dir / "manifest.json", manifest.dump(2) + "\n");
    return manifest;
}

json error_json(const std::exception& e)
{
    json body;
    if (const auto* in = dynamic_cast<const InputError*>(&e))
        body = {{"kind", "input"}, {"field", in->field()}, {"message", in->what()}};
    else if (const auto* r = dynamic_cast<const Refusal*>(&e))
        body = {{"kind", "refusal"}, {"gate", r->gate()}, {"message", r->what()}, {"hint", r->hint()}};
    else if (dynamic_cast<const json::exception*>(&e))
        body = {{"kind", "input"}, {"field", "config"}, {"message", e.what()}};
    else
        body = {{"kind", "internal"}, {"message", e.what()}};
    return {{"error", body}};
}

int exit_code(const std::exception& e)
{
    if (dynamic_cast<const InputError*>(&e) || dynamic_cast<const json::exception*>(&e)) return 2;
    if (dynamic_cast<const Refusal*>(&e)) return 3;
    return 1;
}

}  // namespace dipoleforge
