#include "dipoleforge/grap_scan.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "dipoleforge/errors.hpp"
#include "dipoleforge/tdse.hpp"

namespace dipoleforge {

double ScanResult::gap(std::size_t column, std::size_t lower) const
{
    const auto& e = energies.at(column);
    const std::size_t k = lower - n_lo;
    if (lower < n_lo || k + 1 >= e.size()) throw std::out_of_range("ScanResult::gap: index outside window");
    return (e[k + 1] - e[k]) / PhysConsts::hbar;
}

void ScanResult::validate() const
{
    if (energies.size() != a2_values.size()) throw std::invalid_argument("ScanResult: column count mismatch");
    for (const auto& col : energies) {
        if (col.size() != width()) throw std::invalid_argument("ScanResult: column width mismatch");
        for (std::size_t k = 1; k < col.size(); ++k)
            if (!(col[k] > col[k - 1])) throw std::invalid_argument("ScanResult: energies not strictly increasing");
    }
    if (!branch_map.empty() && branch_map.size() + 1 != columns())
        throw std::invalid_argument("ScanResult: branch map length mismatch");
}

ScanResult make_scan(std::size_t n_lo, std::vector<double> a2_values, std::vector<std::vector<double>> energies)
{
    if (energies.empty() || energies.front().empty()) throw std::invalid_argument("make_scan: no energies");
    ScanResult s;
    s.n_lo = n_lo;
    s.n_hi = n_lo + energies.front().size() - 1;
    s.a2_values = std::move(a2_values);
    s.energies = std::move(energies);
    std::vector<std::size_t> id(s.width());
    std::iota(id.begin(), id.end(), 0);
    s.branch_map.assign(s.columns() > 0 ? s.columns() - 1 : 0, id);
    s.validate();
    return s;
}

double Grap::width() const { return std::sqrt(gap / curvature); }

namespace {

struct Parabola {
    double a_star, gap, curvature;
    bool ok;
};

// gap^2 = A (a - a*)^2 + D^2 through three points.
Parabola fit_gap(double x0, double g0, double x1, double g1, double x2, double g2)
{
    const double y0 = g0 * g0, y1 = g1 * g1, y2 = g2 * g2;
    const double d01 = (y1 - y0) / (x1 - x0), d12 = (y2 - y1) / (x2 - x1);
    const double a = (d12 - d01) / (x2 - x0);
    if (!(a > 0.0)) return {x1, g1, 0.0, false};
    const double b = d01 - a * (x0 + x1);
    const double a_star = -b / (2.0 * a);
    const double d2 = y1 - a * (x1 - a_star) * (x1 - a_star);
    if (!(d2 > 0.0)) return {a_star, 0.0, 0.0, false};
    const double gap = std::sqrt(d2);
    return {a_star, gap, a / gap, true};
}

// Interior minima of the gap above `lower` along the columns ordered by a2.
std::vector<std::size_t> gap_minima(const std::vector<double>& a2, const std::vector<double>& g)
{
    std::vector<std::size_t> out;
    for (std::size_t c = 1; c + 1 < g.size(); ++c)
        if (g[c] < g[c - 1] && g[c] < g[c + 1]) out.push_back(c);
    (void)a2;
    return out;
}

std::vector<std::size_t> ascending_order(const std::vector<double>& a2)
{
    std::vector<std::size_t> idx(a2.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return a2[i] < a2[j]; });
    return idx;
}

}  // namespace

std::vector<Grap> detect_graps(const ScanResult& scan, const GrapOptions& options)
{
    scan.validate();
    std::vector<Grap> out;
    if (scan.columns() < 3) return out;
    const auto order = ascending_order(scan.a2_values);
    std::vector<double> a2(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) a2[k] = scan.a2_values[order[k]];
    for (std::size_t lower = scan.n_lo; lower < scan.n_hi; ++lower) {
        std::vector<double> g(order.size());
        for (std::size_t k = 0; k < order.size(); ++k) g[k] = scan.gap(order[k], lower);
        for (std::size_t c : gap_minima(a2, g)) {
            const auto p = fit_gap(a2[c - 1], g[c - 1], a2[c], g[c], a2[c + 1], g[c + 1]);
            Grap grap{p.a_star, lower, p.gap, p.curvature};
            if (!p.ok) grap = {a2[c], lower, g[c], 0.0};
            if (grap.gap > options.gap_ceiling) continue;
            out.push_back(grap);
        }
    }
    std::sort(out.begin(), out.end(), [](const Grap& a, const Grap& b) { return a.a2_star < b.a2_star; });
    return out;
}

std::vector<std::size_t> overlap_map(const EigenWindow& from, const EigenWindow& to)
{
    if (from.size() != to.size()) throw std::invalid_argument("overlap_map: windows differ in size");
    const std::size_t m = from.size();
    const double h = from.grid.spacing() / internal_units().length_unit();
    struct Entry {
        double value;
        std::size_t i, j;
    };
    std::vector<Entry> entries;
    entries.reserve(m * m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            const auto& a = from.wavefunctions.at(i);
            const auto& b = to.wavefunctions.at(j);
            double s = std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
            entries.push_back({std::abs(s * h), i, j});
        }
    std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.value > b.value; });
    std::vector<std::size_t> map(m, m);
    std::vector<bool> taken(m, false);
    for (const auto& e : entries) {
        if (map[e.i] != m || taken[e.j]) continue;
        map[e.i] = e.j;
        taken[e.j] = true;
    }
    return map;
}

ScanResult scan_columns(const ColumnSolver& solver, double a2_from, double a2_to, std::size_t steps,
                        const ScanOptions& options)
{
    if (steps < 2) throw InputError("steps", "need at least two columns");
    if (a2_from == a2_to) throw InputError("a2_range", "empty range");

    std::vector<double> a2(steps);
    for (std::size_t k = 0; k < steps; ++k)
        a2[k] = a2_from + (a2_to - a2_from) * static_cast<double>(k) / static_cast<double>(steps - 1);

    auto solve_energies = [&](const std::vector<double>& points) {
        std::vector<std::vector<double>> out(points.size());
        std::size_t n_lo = 0;
        auto work = [&](std::size_t k) {
            try {
                auto w = solver(points[k], false);
                out[k] = std::move(w.energies);
                n_lo = w.n_lo;
            } catch (const Refusal& r) {
                std::ostringstream msg;
                msg << "at a2 = " << points[k] << " V/m^2: " << r.what();
                throw Refusal(r.gate(), msg.str(), r.hint());
            }
        };
        const unsigned jobs = std::max(1u, std::min<unsigned>(options.jobs, static_cast<unsigned>(points.size())));
        if (jobs == 1) {
            for (std::size_t k = 0; k < points.size(); ++k) work(k);
        } else {
            std::vector<std::thread> pool;
            std::vector<std::exception_ptr> errors(jobs);
            for (unsigned j = 0; j < jobs; ++j)
                pool.emplace_back([&, j] {
                    try {
                        for (std::size_t k = j; k < points.size(); k += jobs) work(k);
                    } catch (...) {
                        errors[j] = std::current_exception();
                    }
                });
            for (auto& t : pool) t.join();
            for (auto& e : errors)
                if (e) std::rethrow_exception(e);
        }
        return std::make_pair(n_lo, out);
    };

    auto [n_lo, energies] = solve_energies(a2);
    ScanResult scan = make_scan(n_lo, a2, energies);

    if (options.refine) {
        // halve the steps around every gap minimum until its location settles
        std::vector<std::pair<std::size_t, double>> settled;  // (lower, a_star)
        for (std::size_t round = 0; round < options.max_refinements; ++round) {
            const auto order = ascending_order(scan.a2_values);
            std::vector<double> xs(order.size());
            for (std::size_t k = 0; k < order.size(); ++k) xs[k] = scan.a2_values[order[k]];
            std::vector<double> inserts;
            std::vector<std::pair<std::size_t, double>> estimates;
            for (std::size_t lower = scan.n_lo; lower < scan.n_hi; ++lower) {
                std::vector<double> g(order.size());
                for (std::size_t k = 0; k < order.size(); ++k) g[k] = scan.gap(order[k], lower);
                for (std::size_t c : gap_minima(xs, g)) {
                    if (g[c] > options.grap.gap_ceiling) continue;
                    const auto p = fit_gap(xs[c - 1], g[c - 1], xs[c], g[c], xs[c + 1], g[c + 1]);
                    const double spacing = std::max(xs[c] - xs[c - 1], xs[c + 1] - xs[c]);
                    double width = p.ok ? std::sqrt(p.gap / p.curvature) : spacing;
                    bool done = false;
                    for (const auto& [l, a] : settled)
                        if (l == lower && std::abs(a - p.a_star) < options.locate_tolerance * width) done = true;
                    estimates.push_back({lower, p.a_star});
                    if (done && p.ok && spacing <= 4.0 * width) continue;
                    const double tiny = 1e-12 * std::abs(a2_to - a2_from);
                    if (xs[c] - xs[c - 1] > tiny) inserts.push_back(0.5 * (xs[c] + xs[c - 1]));
                    if (xs[c + 1] - xs[c] > tiny) inserts.push_back(0.5 * (xs[c] + xs[c + 1]));
                }
            }
            settled = estimates;
            std::sort(inserts.begin(), inserts.end());
            inserts.erase(std::unique(inserts.begin(), inserts.end()), inserts.end());
            if (inserts.empty()) break;
            auto [lo2, extra] = solve_energies(inserts);
            (void)lo2;
            for (std::size_t k = 0; k < inserts.size(); ++k) {
                scan.a2_values.push_back(inserts[k]);
                scan.energies.push_back(std::move(extra[k]));
            }
        }
        // restore sweep order
        std::vector<std::size_t> idx(scan.columns());
        std::iota(idx.begin(), idx.end(), 0);
        const bool descending = a2_to < a2_from;
        std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) {
            return descending ? scan.a2_values[i] > scan.a2_values[j] : scan.a2_values[i] < scan.a2_values[j];
        });
        ScanResult ordered;
        ordered.n_lo = scan.n_lo;
        ordered.n_hi = scan.n_hi;
        for (std::size_t i : idx) {
            ordered.a2_values.push_back(scan.a2_values[i]);
            ordered.energies.push_back(scan.energies[i]);
        }
        scan = std::move(ordered);
    }

    std::vector<std::size_t> id(scan.width());
    std::iota(id.begin(), id.end(), 0);
    scan.branch_map.assign(scan.columns() - 1, id);
    if (options.branch_map) {
        EigenWindow prev = solver(scan.a2_values.front(), true);
        if (prev.has_wavefunctions()) {
            for (std::size_t c = 0; c + 1 < scan.columns(); ++c) {
                EigenWindow next = solver(scan.a2_values[c + 1], true);
                scan.branch_map[c] = overlap_map(prev, next);
                prev = std::move(next);
            }
        }
    }
    scan.validate();
    return scan;
}

ScanResult scan_a2(const PotentialSpec& family, double a2_from, double a2_to, std::size_t steps, std::size_t n_lo,
                   std::size_t n_hi, const Grid& grid, const ScanOptions& options, const SolveOptions& solve)
{
    if (a2_from < 0.0 || a2_to < 0.0) throw InputError("a2_V_per_m2", "scan range must be non-negative");
    const ColumnSolver solver = [&](double a2, bool vectors) {
        SolveOptions opt = solve;
        opt.keep_wavefunctions = vectors;
        opt.jobs = 1;
        opt.node_audit_stride = vectors ? solve.node_audit_stride : 0;
        return solve_window(family.with_a2(a2), grid, n_lo, n_hi, opt);
    };
    return scan_columns(solver, a2_from, a2_to, steps, options);
}

LandauZenerResult landau_zener_check(const Grap& grap, double sweep_rate, const PotentialSpec& family,
                                     const Grid& grid, const LandauZenerOptions& options)
{
    if (!(grap.gap > 0.0) || !(grap.curvature > 0.0)) throw InputError("grap", "needs a positive gap and curvature");
    if (sweep_rate == 0.0) throw InputError("sweep_rate", "must be non-zero");
    if (2.0 * options.half_span_widths < 10.0)
        throw Refusal("sweep", "sweep spans fewer than 10 gap widths", "half_span_widths >= 5");

    const double width = grap.width();
    const double half = options.half_span_widths * width;
    const double a_start = sweep_rate > 0.0 ? grap.a2_star - half : grap.a2_star + half;
    const double a_end = sweep_rate > 0.0 ? grap.a2_star + half : grap.a2_star - half;
    if (std::min(a_start, a_end) < 0.0) throw Refusal("sweep", "sweep would reach negative a2", "narrow the span");
    const double duration = 2.0 * half / std::abs(sweep_rate);

    const std::size_t n = grap.lower_index;
    const auto w0 = solve_window(family.with_a2(a_start), grid, n, n + 1);
    const auto w1 = solve_window(family.with_a2(a_end), grid, n, n + 1);

    // asymptotic slope of the splitting: gap^2 = c^2 (a - a*)^2 + Delta^2
    const double c = std::sqrt(grap.curvature * grap.gap);  // rad/s per V/m^2
    const double slope = PhysConsts::hbar * c * std::abs(sweep_rate);
    const double p_lz = std::exp(-2.0 * std::numbers::pi * 0.25 * grap.gap * grap.gap / (c * std::abs(sweep_rate)));

    const double split_end = std::max(w0.energy(n + 1) - w0.energy(n), w1.energy(n + 1) - w1.energy(n));
    double dt = options.dt;
    if (dt == 0.0) dt = std::min(0.25 * 0.05 * two_pi * PhysConsts::hbar / split_end, duration / 4000.0);

    PropagateOptions opt;
    opt.band_halfwidth = split_end;
    WaveState psi = make_state(grid, w0.wavefunction(n));
    psi = propagate(
        psi, family, [&](double t) { return a_start + sweep_rate * t; }, duration, dt, opt);
    return {fidelity(psi, w1.wavefunction(n + 1)), p_lz, duration, slope};
}

}  // namespace dipoleforge
