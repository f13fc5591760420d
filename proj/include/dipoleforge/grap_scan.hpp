#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "dipoleforge/eigensolver.hpp"

namespace dipoleforge {

/// Eigenvalues of a tracked index window along a sweep of a2.
struct ScanResult {
    std::size_t n_lo = 0;
    std::size_t n_hi = 0;
    std::vector<double> a2_values;              // V/m^2, in sweep order
    std::vector<std::vector<double>> energies;  // [column][n - n_lo], J
    // branch_map[c][k] = position in column c+1 continuing branch k of column c
    std::vector<std::vector<std::size_t>> branch_map;

    std::size_t columns() const { return a2_values.size(); }
    std::size_t width() const { return n_hi - n_lo + 1; }
    double gap(std::size_t column, std::size_t lower) const;  // rad/s between lower and lower+1
    void validate() const;
};

/// Builds a scan from precomputed energies (e.g. a synthetic oracle). The
/// branch map is the identity.
ScanResult make_scan(std::size_t n_lo, std::vector<double> a2_values, std::vector<std::vector<double>> energies);

struct Grap {
    double a2_star;           // V/m^2
    std::size_t lower_index;  // n, the gap is between n and n+1
    double gap;               // rad/s
    double curvature;         // d^2 gap / d a2^2 at a2_star, rad/s per (V/m^2)^2
    double width() const;     // a2 distance over which gap^2 doubles
};

struct GrapOptions {
    double gap_ceiling = 2.0 * 3.14159265358979323846 * 30e6;  // rad/s
};

/// Interior local minima of adjacent-level gaps, refined by the parabola
/// through gap^2 at the minimum column and its neighbours (exact for a
/// hyperbolic avoided crossing). Sorted by a2_star.
std::vector<Grap> detect_graps(const ScanResult& scan, const GrapOptions& options = {});

/// One column of a scan. Wavefunctions are only needed when `want_vectors`.
using ColumnSolver = std::function<EigenWindow(double a2, bool want_vectors)>;

struct ScanOptions {
    bool refine = true;
    double locate_tolerance = 0.01;  // a2_star located to this fraction of the gap width
    std::size_t max_refinements = 40;
    bool branch_map = true;          // overlap-based continuity map (needs vectors)
    unsigned jobs = 1;
    GrapOptions grap;
};

/// Generic sweep over a2 from `a2_from` to `a2_to` (either order) with
/// adaptive halving near gap minima.
ScanResult scan_columns(const ColumnSolver& solver, double a2_from, double a2_to, std::size_t steps,
                        const ScanOptions& options = {});

/// Sweep of the full potential with a2 free.
ScanResult scan_a2(const PotentialSpec& family, double a2_from, double a2_to, std::size_t steps, std::size_t n_lo,
                   std::size_t n_hi, const Grid& grid, const ScanOptions& options = {},
                   const SolveOptions& solve = {});

/// Greedy maximum-|overlap| bijection between two eigenvector sets.
std::vector<std::size_t> overlap_map(const EigenWindow& from, const EigenWindow& to);

struct LandauZenerResult {
    double p_diabatic_tdse;
    double p_landau_zener;
    double sweep_duration;  // s
    double slope;           // |d(E_upper - E_lower)/dt| far from the crossing, J/s
};

struct LandauZenerOptions {
    double half_span_widths = 20.0;  // sweep covers a2_star +- this many gap widths
    double dt = 0.0;                 // s; 0 picks a step from the band energies
};

/// Linear sweep of a2 across `grap` at `sweep_rate` (V/m^2 per s, sign sets
/// direction). The initial state is the lower adiabatic state on the start
/// side; P_diabatic is the population found in the upper adiabatic state at
/// the end, i.e. the part that stayed on its diabatic branch.
LandauZenerResult landau_zener_check(const Grap& grap, double sweep_rate, const PotentialSpec& family,
                                     const Grid& grid, const LandauZenerOptions& options = {});

}  // namespace dipoleforge
