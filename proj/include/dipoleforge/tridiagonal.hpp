#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace dipoleforge {

/// Real symmetric tridiagonal matrix. `off[i]` couples rows i and i+1.
struct SymTridiagonal {
    std::vector<double> diag;
    std::vector<double> off;

    std::size_t size() const { return diag.size(); }
    void multiply(std::span<const double> x, std::span<double> y) const;
};

/// Number of eigenvalues strictly below `x` (Sturm sequence / LDL^T inertia).
std::size_t sturm_count(const SymTridiagonal& t, double x);

/// Gershgorin enclosure of the whole spectrum.
std::pair<double, double> gershgorin_bounds(const SymTridiagonal& t);

/// Eigenvalues with 0-based indices [k_lo, k_hi] in ascending order, found by
/// bisection on Sturm counts. Only the requested slice is ever computed.
/// `jobs` > 1 splits the slice into contiguous sub-slices solved on threads.
std::vector<double> eigenvalues_by_index(const SymTridiagonal& t, std::size_t k_lo, std::size_t k_hi,
                                         unsigned jobs = 1);

struct InverseIterationResult {
    std::vector<double> vector;  // unit 2-norm
    double eigenvalue;           // Rayleigh quotient
    double residual;             // ||T v - lambda v||_2
    int iterations;
    bool converged;
};

/// Eigenvector for a known eigenvalue by inverse iteration with a pivoted
/// tridiagonal LU. The iterate is kept orthogonal to every vector in
/// `deflate` (eigenvectors of nearby eigenvalues already computed).
/// `apply`, when given, is a more accurate product y = T x than the stored
/// entries allow (e.g. a stencil written in differences); it is used for the
/// residual, the Rayleigh quotient and one step of iterative refinement per solve.
using MatVec = std::function<void(std::span<const double>, std::span<double>)>;
InverseIterationResult inverse_iteration(const SymTridiagonal& t, double lambda,
                                         std::span<const std::vector<double>* const> deflate,
                                         double residual_tol, unsigned seed, const MatVec& apply = {});

/// Sign changes among entries whose magnitude exceeds `rel_floor * max|v|`.
std::size_t count_sign_changes(std::span<const double> v, double rel_floor = 1e-9);

}  // namespace dipoleforge
