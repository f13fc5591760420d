#include "dipoleforge/eigensolver.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <sstream>

#include "dipoleforge/errors.hpp"

namespace dipoleforge {

namespace {

constexpr double machine_eps = std::numeric_limits<double>::epsilon();
constexpr double min_points_per_wavelength = 8.0;
constexpr double min_decay_exponent = 15.0;

double um(double metres) { return metres / internal_units().length_unit(); }

double trapezoid_dot(std::span<const double> a, std::span<const double> b, double h)
{
    const std::size_t n = a.size();
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) sum += a[k] * b[k];
    sum -= 0.5 * (a[0] * b[0] + a[n - 1] * b[n - 1]);
    return sum * h;
}

double trapezoid_dot_z(std::span<const double> a, std::span<const double> b, double z0, double h)
{
    const std::size_t n = a.size();
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) sum += a[k] * b[k] * (z0 + h * static_cast<double>(k));
    sum -= 0.5 * (a[0] * b[0] * z0 + a[n - 1] * b[n - 1] * (z0 + h * static_cast<double>(n - 1)));
    return sum * h;
}

// Rayleigh quotient and residual with the kinetic term written as differences
// of neighbouring amplitudes, which avoids cancelling O(1/h^2) terms.
std::pair<double, double> stable_residual(std::span<const double> v, std::span<const double> x, double h)
{
    const std::size_t n = x.size();
    const double c = 0.5 / (h * h);
    auto apply = [&](std::size_t i) {
        const double left = i > 0 ? x[i] - x[i - 1] : x[i];
        const double right = i + 1 < n ? x[i] - x[i + 1] : x[i];
        return v[i] * x[i] + c * (left + right);
    };
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        num += x[i] * apply(i);
        den += x[i] * x[i];
    }
    const double rq = num / den;
    double r2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = apply(i) - rq * x[i];
        r2 += r * r;
    }
    return {rq, std::sqrt(r2 / den)};
}

}  // namespace

void Grid::validate() const
{
    if (!(z_max > z_min)) throw InputError("grid", "z_max must exceed z_min");
    if (n_points < 3) throw InputError("grid.n_points", "need at least 3 points");
}

Grid default_grid(const PotentialSpec& spec, std::size_t n_points)
{
    if (!(spec.d > 0.0)) throw InputError("d_m", "default grid needs a positive d");
    return {-2.25 * spec.d, 1.125 * spec.d, n_points};
}

std::vector<double> sample_potential_energy(const AxialPolynomial& potential, const Grid& grid)
{
    const auto c = potential.internal_energy_coefficients();
    const double h = um(grid.spacing());
    const double z0 = um(grid.z_min);
    std::vector<double> v(grid.n_points);
    for (std::size_t i = 0; i < grid.n_points; ++i) {
        const double z = z0 + h * static_cast<double>(i);
        v[i] = c[0] + z * (c[1] + z * (c[2] + z * (c[3] + z * c[4])));
    }
    return v;
}

SymTridiagonal build_hamiltonian(const AxialPolynomial& potential, const Grid& grid)
{
    grid.validate();
    const double h = um(grid.spacing());
    SymTridiagonal t;
    t.diag = sample_potential_energy(potential, grid);
    for (auto& d : t.diag) d += 1.0 / (h * h);
    t.off.assign(grid.n_points - 1, -0.5 / (h * h));
    return t;
}

ResolutionReport check_resolution(const AxialPolynomial& potential, const Grid& grid, std::size_t n)
{
    grid.validate();
    constexpr std::size_t samples = 4001;
    const Grid fine{grid.z_min, grid.z_max, samples};
    const auto v = sample_potential_energy(potential, fine);
    const double dz = um(fine.spacing());
    const double vmin = *std::min_element(v.begin(), v.end());
    const double vedge = std::min(v.front(), v.back());

    auto action = [&](double e) {
        double s = 0.0;
        for (double vi : v)
            if (vi < e) s += std::sqrt(2.0 * (e - vi));
        return s * dz / std::numbers::pi;
    };
    const double target = static_cast<double>(n) + 0.5;
    double lo = vmin, hi = vedge;
    const bool bounded = action(hi) >= target;
    if (bounded) {
        for (int it = 0; it < 60 && hi - lo > 1e-9 * std::max(1.0, std::abs(hi)); ++it) {
            const double mid = 0.5 * (lo + hi);
            (action(mid) < target ? lo : hi) = mid;
        }
    }
    const double e = bounded ? 0.5 * (lo + hi) : vedge;

    ResolutionReport r{};
    r.estimated_energy = internal_units().from_internal(e, Dimension::energy);
    const double k_max = std::sqrt(2.0 * std::max(e - vmin, 1e-300));
    const double wavelength = 2.0 * std::numbers::pi / k_max;
    const double h = um(grid.spacing());
    r.min_points_per_wavelength = wavelength / h;
    const double span = um(grid.z_max - grid.z_min);
    r.required_points = static_cast<std::size_t>(std::ceil(span * min_points_per_wavelength / wavelength)) + 1;
    r.resolution_ok = r.min_points_per_wavelength >= min_points_per_wavelength;

    // WKB decay between the outermost turning points and the walls.
    std::size_t first = 0, last = v.size() - 1;
    while (first < v.size() && v[first] >= e) ++first;
    while (last > 0 && v[last] >= e) --last;
    double left = 0.0, right = 0.0;
    for (std::size_t i = 0; i < first && i < v.size(); ++i) left += std::sqrt(2.0 * (v[i] - e)) * dz;
    for (std::size_t i = last + 1; i < v.size(); ++i) right += std::sqrt(2.0 * (v[i] - e)) * dz;
    r.left_decay = left;
    r.right_decay = right;
    r.domain_ok = bounded && left >= min_decay_exponent && right >= min_decay_exponent;
    return r;
}

double EigenWindow::energy(std::size_t n) const
{
    if (!contains(n)) throw std::out_of_range("EigenWindow::energy: index outside window");
    return energies[n - n_lo];
}

const std::vector<double>& EigenWindow::wavefunction(std::size_t n) const
{
    if (!contains(n)) throw std::out_of_range("EigenWindow::wavefunction: index outside window");
    if (wavefunctions.empty()) throw std::logic_error("EigenWindow: wavefunctions were not kept");
    return wavefunctions[n - n_lo];
}

EigenWindow solve_window(const AxialPolynomial& potential, const Grid& grid, std::size_t n_lo, std::size_t n_hi,
                         const SolveOptions& options)
{
    grid.validate();
    if (n_hi < n_lo) throw InputError("window", "n_hi must be >= n_lo");
    if (n_hi >= grid.n_points) throw InputError("window", "n_hi exceeds the number of grid points");

    if (options.resolution_gate) {
        const auto report = check_resolution(potential, grid, n_hi);
        if (!report.resolution_ok) {
            std::ostringstream msg, hint;
            msg << "grid resolves only " << report.min_points_per_wavelength << " points per wavelength at n = " << n_hi;
            hint << "n_points >= " << report.required_points;
            throw Refusal("resolution", msg.str(), hint.str());
        }
        if (options.domain_gate && !report.domain_ok) {
            std::ostringstream msg;
            msg << "domain does not contain the turning points of n = " << n_hi << " with margin (decay exponents "
                << report.left_decay << ", " << report.right_decay << ")";
            throw Refusal("domain", msg.str(), "widen [z_min, z_max]");
        }
    }

    const SymTridiagonal t = build_hamiltonian(potential, grid);
    const auto v_samples = sample_potential_energy(potential, grid);
    const double kin = 0.5 / (um(grid.spacing()) * um(grid.spacing()));
    const MatVec stencil = [&](std::span<const double> x, std::span<double> y) {
        const std::size_t n = x.size();
        for (std::size_t i = 0; i < n; ++i) {
            const double left = i > 0 ? x[i] - x[i - 1] : x[i];
            const double right = i + 1 < n ? x[i] - x[i + 1] : x[i];
            y[i] = v_samples[i] * x[i] + kin * (left + right);
        }
    };
    const auto lambdas = eigenvalues_by_index(t, n_lo, n_hi, options.jobs);
    const auto [glo, ghi] = gershgorin_bounds(t);
    const double tnorm = std::max(std::abs(glo), std::abs(ghi));
    const double deflate_gap = 2.2e-6 * tnorm;

    const double h = um(grid.spacing());
    const double z0 = um(grid.z_min);
    const double length_unit = internal_units().length_unit();
    const std::size_t m = n_hi - n_lo + 1;

    EigenWindow w;
    w.grid = grid;
    w.n_lo = n_lo;
    w.n_hi = n_hi;
    w.band = options.dipole_band;
    w.energies.resize(m);
    w.residual_norms.resize(m);
    w.z_band.assign(w.band + 1, std::vector<double>(m, std::numeric_limits<double>::quiet_NaN()));
    if (options.keep_wavefunctions) w.wavefunctions.resize(m);

    struct Held {
        std::size_t k;
        double lambda;
        std::vector<double> unit;  // unit 2-norm, for deflation
        std::vector<double> psi;   // trapezoid-normalised
    };
    std::deque<Held> held;
    const std::size_t keep = std::max<std::size_t>(w.band, 8);

    for (std::size_t k = 0; k < m; ++k) {
        std::vector<const std::vector<double>*> deflate;
        for (const auto& hv : held)
            if (std::abs(lambdas[k] - hv.lambda) < deflate_gap) deflate.push_back(&hv.unit);

        const double scale = std::max(std::abs(lambdas[k]), 1.0);
        auto res = inverse_iteration(t, lambdas[k], deflate, 0.01 * options.residual_gate * scale,
                                     static_cast<unsigned>(n_lo + k + 1), stencil);
        const auto [rq, residual] = stable_residual(v_samples, res.vector, um(grid.spacing()));
        res.eigenvalue = rq;
        const double rel = residual / std::max(std::abs(rq), 1.0);
        w.residual_norms[k] = rel;
        if (!(rel < options.residual_gate)) w.flagged.push_back(n_lo + k);
        w.energies[k] = internal_units().from_internal(res.eigenvalue, Dimension::energy);

        if (options.node_audit_stride > 0 && k % options.node_audit_stride == 0) {
            if (count_sign_changes(res.vector) != n_lo + k) w.node_audit_failures.push_back(n_lo + k);
        }

        std::vector<double> psi = res.vector;
        for (auto& x : psi) x /= std::sqrt(h);
        const double nrm = std::sqrt(trapezoid_dot(psi, psi, h));
        for (auto& x : psi) x /= nrm;

        w.z_band[0][k] = trapezoid_dot_z(psi, psi, z0, h) * length_unit;
        for (const auto& hv : held) {
            const std::size_t offset = k - hv.k;
            w.orthonormality_error = std::max(w.orthonormality_error, std::abs(trapezoid_dot(hv.psi, psi, h)));
            if (offset <= w.band) w.z_band[offset][hv.k] = trapezoid_dot_z(hv.psi, psi, z0, h) * length_unit;
        }
        w.orthonormality_error = std::max(w.orthonormality_error, std::abs(trapezoid_dot(psi, psi, h) - 1.0));

        if (options.keep_wavefunctions) w.wavefunctions[k] = psi;
        held.push_back({k, lambdas[k], std::move(res.vector), std::move(psi)});
        if (held.size() > keep) held.pop_front();
    }
    return w;
}

EigenWindow solve_window(const PotentialSpec& spec, const Grid& grid, std::size_t n_lo, std::size_t n_hi,
                         const SolveOptions& options)
{
    return solve_window(axial_polynomial(spec), grid, n_lo, n_hi, options);
}

double position_moment(const EigenWindow& w, std::size_t i, std::size_t j, int power)
{
    switch (power) {
    case 0: return matrix_element(w, i, j, [](double) { return 1.0; });
    case 1: return matrix_element(w, i, j, [](double z) { return z; });
    case 2: return matrix_element(w, i, j, [](double z) { return z * z; });
    default: return matrix_element(w, i, j, [power](double z) { return std::pow(z, power); });
    }
}

double orthonormality_error(const EigenWindow& w)
{
    double err = 0.0;
    for (std::size_t i = w.n_lo; i <= w.n_hi; ++i)
        for (std::size_t j = i; j <= w.n_hi; ++j) {
            const double s = matrix_element(w, i, j, [](double) { return 1.0; });
            err = std::max(err, std::abs(s - (i == j ? 1.0 : 0.0)));
        }
    return err;
}

// --- DipoleTable -----------------------------------------------------------

DipoleTable::DipoleTable(std::size_t n_lo, std::vector<double> energies, std::size_t bandwidth)
    : n_lo_(n_lo), energies_(std::move(energies)), bandwidth_(bandwidth),
      z_(energies_.size() * energies_.size(), std::numeric_limits<double>::quiet_NaN())
{
    if (energies_.empty()) throw std::invalid_argument("DipoleTable: empty window");
    if (bandwidth < 1) throw InputError("bandwidth", "must be >= 1");
}

std::size_t DipoleTable::index(std::size_t i, std::size_t j) const
{
    if (!contains(i) || !contains(j)) throw std::out_of_range("DipoleTable: index outside window");
    return (i - n_lo_) * energies_.size() + (j - n_lo_);
}

bool DipoleTable::available(std::size_t i, std::size_t j) const
{
    return contains(i) && contains(j) && !std::isnan(z_[index(i, j)]);
}

double DipoleTable::z(std::size_t i, std::size_t j) const
{
    const double v = z_[index(i, j)];
    if (std::isnan(v)) throw std::out_of_range("DipoleTable: element outside the computed band");
    return v;
}

double DipoleTable::mu(std::size_t i, std::size_t j) const { return z(i, j) / 1e-6; }

double DipoleTable::omega(std::size_t i, std::size_t j) const
{
    return (energy(i) - energy(j)) / PhysConsts::hbar;
}

void DipoleTable::set_z(std::size_t i, std::size_t j, double z_metres)
{
    z_[index(i, j)] = z_metres;
    z_[index(j, i)] = z_metres;
}

DipoleTable dipole_table(const EigenWindow& window, std::size_t bandwidth)
{
    if (!window.flagged.empty()) {
        std::ostringstream msg;
        msg << window.flagged.size() << " eigenpairs failed the residual gate (first n = " << window.flagged.front()
            << ")";
        throw Refusal("residual", msg.str(), "refine the grid or widen the domain");
    }
    DipoleTable table(window.n_lo, window.energies, bandwidth);
    const std::size_t m = window.size();
    if (window.has_wavefunctions()) {
        const double length_unit = internal_units().length_unit();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = i; j < m && j <= i + bandwidth; ++j)
                table.set_z(window.n_lo + i, window.n_lo + j,
                            position_moment(window, window.n_lo + i, window.n_lo + j, 1) * length_unit);
    } else {
        if (bandwidth > window.band)
            throw InputError("bandwidth", "exceeds the band recorded while solving without wavefunctions");
        for (std::size_t k = 0; k <= bandwidth; ++k)
            for (std::size_t i = 0; i + k < m; ++i) table.set_z(window.n_lo + i, window.n_lo + i + k, window.z_band[k][i]);
    }
    return table;
}

double effective_detuning(const DipoleTable& table, std::size_t n, std::size_t n_prime, std::size_t search_band)
{
    if (!table.contains(n) || !table.contains(n_prime) || n == n_prime)
        throw InputError("pair", "(n, n') must be two distinct indices inside the table");
    const double mu_pair = std::abs(table.mu(n, n_prime));
    const double omega_pair = std::abs(table.omega(n, n_prime));
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i : {n, n_prime}) {
        const std::size_t j_lo = i > search_band ? i - search_band : 0;
        for (std::size_t j = j_lo; j <= i + search_band; ++j) {
            if (j == n || j == n_prime || !table.contains(j)) continue;
            if (!table.available(i, j))
                throw InputError("search_band", "exceeds the dipole table bandwidth");
            const double mu_ij = std::abs(table.mu(i, j));
            if (mu_ij < 1e-6 * mu_pair) continue;
            const double detune = std::abs(std::abs(table.omega(i, j)) - omega_pair);
            best = std::min(best, mu_pair / mu_ij * detune);
        }
    }
    if (!std::isfinite(best)) throw std::runtime_error("effective_detuning: no candidate transitions in band");
    return best;
}

std::vector<TransitionRecord> transition_curve(const EigenWindow& window)
{
    std::vector<TransitionRecord> out;
    if (window.size() < 2) return out;
    const DipoleTable table = dipole_table(window, 1);
    for (std::size_t n = window.n_lo; n < window.n_hi; ++n)
        out.push_back({n, table.omega(n + 1, n), std::abs(table.mu(n + 1, n))});
    return out;
}

}  // namespace dipoleforge
