#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dipoleforge/potential.hpp"
#include "dipoleforge/tridiagonal.hpp"

namespace dipoleforge {

/// Uniform grid in metres. The wavefunction is taken to vanish just outside
/// [z_min, z_max], so the ends act as hard walls.
struct Grid {
    double z_min = 0.0;
    double z_max = 0.0;
    std::size_t n_points = 0;

    double spacing() const { return (z_max - z_min) / static_cast<double>(n_points - 1); }
    double z(std::size_t i) const { return z_min + spacing() * static_cast<double>(i); }
    Grid refined() const { return {z_min, z_max, 2 * n_points - 1}; }
    void validate() const;
};

/// Default grid for a built spec: z in [-2.25 d, +1.125 d].
Grid default_grid(const PotentialSpec& spec, std::size_t n_points);

/// Three-point finite-difference H = -1/2 d^2/dz^2 + V in internal units.
SymTridiagonal build_hamiltonian(const AxialPolynomial& potential, const Grid& grid);

/// Potential energy samples (internal units) on the grid.
std::vector<double> sample_potential_energy(const AxialPolynomial& potential, const Grid& grid);

struct ResolutionReport {
    double estimated_energy;           // J, semiclassical estimate of E(n)
    double min_points_per_wavelength;  // at the estimated energy
    std::size_t required_points;       // n_points meeting 8 points per wavelength
    double left_decay;                 // WKB exponent between turning point and z_min
    double right_decay;
    bool resolution_ok;
    bool domain_ok;
};

/// Semiclassical audit of a grid for states up to index `n`.
ResolutionReport check_resolution(const AxialPolynomial& potential, const Grid& grid, std::size_t n);

struct SolveOptions {
    std::size_t dipole_band = 1;    // <i|z|i+k> for k <= dipole_band recorded while solving
    bool keep_wavefunctions = true;
    unsigned jobs = 1;
    double residual_gate = 1e-8;
    bool resolution_gate = true;
    bool domain_gate = true;        // off for deliberately hard-walled domains
    std::size_t node_audit_stride = 1;
};

/// Selected eigenpairs of the axial Hamiltonian for global indices
/// [n_lo, n_hi]. Index n is the node count over the whole domain.
struct EigenWindow {
    Grid grid;
    std::size_t n_lo = 0;
    std::size_t n_hi = 0;
    std::vector<double> energies;                    // J
    std::vector<std::vector<double>> wavefunctions;  // um^-1/2, trapezoid-normalised; empty if not kept
    std::vector<double> residual_norms;              // ||H psi - E psi|| / ||E psi||
    std::vector<std::size_t> flagged;                // indices that failed the residual gate
    std::vector<std::size_t> node_audit_failures;
    double orthonormality_error = 0.0;               // max over pairs within the recorded band
    std::size_t band = 0;
    std::vector<std::vector<double>> z_band;         // z_band[k][i - n_lo] = <i|z|i+k> in metres

    std::size_t size() const { return energies.size(); }
    bool contains(std::size_t n) const { return n >= n_lo && n <= n_hi; }
    double energy(std::size_t n) const;
    const std::vector<double>& wavefunction(std::size_t n) const;
    bool has_wavefunctions() const { return !wavefunctions.empty(); }
};

/// Spectrum slicing: eigenvalues by Sturm bisection, vectors by inverse
/// iteration. Throws Refusal when the grid fails the resolution gate.
EigenWindow solve_window(const AxialPolynomial& potential, const Grid& grid, std::size_t n_lo, std::size_t n_hi,
                         const SolveOptions& options = {});
EigenWindow solve_window(const PotentialSpec& spec, const Grid& grid, std::size_t n_lo, std::size_t n_hi,
                         const SolveOptions& options = {});

/// Trapezoid-rule <psi_i| f(z) |psi_j> with z in um; needs stored wavefunctions.
template <class F>
double matrix_element(const EigenWindow& w, std::size_t i, std::size_t j, F&& f);

/// <i|z^k|j> in um^k.
double position_moment(const EigenWindow& w, std::size_t i, std::size_t j, int power);

/// Full orthonormality audit over all stored wavefunctions.
double orthonormality_error(const EigenWindow& w);

/// z_ij, mu_ij = e z_ij and omega_ij = (E_i - E_j)/hbar for |i - j| <= bandwidth.
class DipoleTable {
public:
    DipoleTable(std::size_t n_lo, std::vector<double> energies, std::size_t bandwidth);

    std::size_t n_lo() const { return n_lo_; }
    std::size_t n_hi() const { return n_lo_ + energies_.size() - 1; }
    std::size_t bandwidth() const { return bandwidth_; }
    bool contains(std::size_t n) const { return n >= n_lo() && n <= n_hi(); }
    bool available(std::size_t i, std::size_t j) const;

    double z(std::size_t i, std::size_t j) const;      // m
    double mu(std::size_t i, std::size_t j) const;     // e*um
    double omega(std::size_t i, std::size_t j) const;  // rad/s
    double energy(std::size_t n) const { return energies_.at(n - n_lo_); }

    void set_z(std::size_t i, std::size_t j, double z_metres);

private:
    std::size_t index(std::size_t i, std::size_t j) const;

    std::size_t n_lo_;
    std::vector<double> energies_;  // J
    std::size_t bandwidth_;
    std::vector<double> z_;         // dense, NaN outside the band
};

DipoleTable dipole_table(const EigenWindow& window, std::size_t bandwidth);

/// Dipole-weighted minimum detuning protecting the pair (n, n'):
/// min over i in {n, n'}, j outside, |j - i| <= search_band of
/// (|mu_nn'| / |mu_ij|) * ||omega_ij| - |omega_nn'||.
double effective_detuning(const DipoleTable& table, std::size_t n, std::size_t n_prime, std::size_t search_band);

struct TransitionRecord {
    std::size_t n;
    double omega;  // omega_{n+1,n}, rad/s
    double edm;    // |mu_{n+1,n}|, e*um
};

std::vector<TransitionRecord> transition_curve(const EigenWindow& window);

// ---------------------------------------------------------------------------

template <class F>
double matrix_element(const EigenWindow& w, std::size_t i, std::size_t j, F&& f)
{
    const auto& a = w.wavefunction(i);
    const auto& b = w.wavefunction(j);
    const double h = w.grid.spacing() / internal_units().length_unit();
    const double z0 = w.grid.z_min / internal_units().length_unit();
    const std::size_t n = a.size();
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double weight = (k == 0 || k + 1 == n) ? 0.5 : 1.0;
        sum += weight * a[k] * f(z0 + h * static_cast<double>(k)) * b[k];
    }
    return sum * h;
}

}  // namespace dipoleforge
