#pragma once

#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dipoleforge/eigensolver.hpp"

namespace dipoleforge {

/// Single-sided electric-field noise S_E(w) = S0 (w0 / w)^alpha.
struct NoiseSpec {
    double s0 = 1e-12;             // (V/m)^2/Hz at omega0
    double omega0 = two_pi * 1e6;  // rad/s
    double alpha = 1.3;

    double spectral_density(double omega) const;
    void validate() const;
};

/// Motional eigenbasis [k_lo, k_hi] with the two-level system (n, n').
/// n is the upper level of the pair.
struct TruncatedModel {
    std::size_t k_lo = 0;
    std::size_t k_hi = 0;
    std::size_t n = 0;
    std::size_t n_prime = 0;
    std::vector<double> energies;  // J
    Eigen::MatrixXd z;             // m, z(i, j) = <k_lo+i| z |k_lo+j>

    std::size_t size() const { return energies.size(); }
    std::size_t pos(std::size_t global) const;
    double omega(std::size_t i, std::size_t j) const;  // (E_i - E_j)/hbar, global indices
    double omega_tls() const { return omega(n, n_prime); }
    double z_tls() const;        // z_{n n'}, m
    double phi_z() const;        // arg z_{n n'}
    double mu_tls() const;       // |mu_{n n'}|, e*um
};

/// Needs every pair of the basis in the table (bandwidth >= basis size - 1).
/// A two-state basis is the bare two-level system; larger bases must keep
/// min(4, available) guard states on each side of the pair.
TruncatedModel truncated_model(const DipoleTable& table, std::size_t k_lo, std::size_t k_hi, std::size_t n,
                               std::size_t n_prime);

/// Isolated two-level system with transition frequency omega and |z| = z_tls.
TruncatedModel two_level_model(double omega, double z_tls);

/// rates(i, j) = Gamma_{i -> j} (1/s) between basis positions.
struct LindbladSet {
    Eigen::MatrixXd rates;
    std::vector<std::string> warnings;

    double out_rate(std::size_t i) const { return rates.row(static_cast<Eigen::Index>(i)).sum(); }
    double max_rate() const;
    LindbladSet scaled(double factor) const;
};

/// Gamma_{i->j} = e^2 |z_ij|^2 S_E(|w_ij|) / (2 hbar^2), symmetric.
LindbladSet noise_rates(const TruncatedModel& model, const NoiseSpec& noise);
LindbladSet no_noise(const TruncatedModel& model);

/// Half the leakage out of the pair: sum over k outside {n, n'} of Gamma_{n->k} + Gamma_{n'->k}, halved.
double leakage_rate_estimate(const TruncatedModel& model, const LindbladSet& lindblad);

enum class Frame {
    lab,  // interaction picture of H_z, every term kept
    rwa   // co-rotating terms within rwa_cutoff of the drive
};

Frame parse_frame(const std::string& name);
std::string to_string(Frame frame);

struct MasterOptions {
    Frame frame = Frame::rwa;
    double rwa_cutoff = 0.0;     // rad/s; 0 means half the drive frequency
    double dt = 0.0;             // s; 0 picks the largest step passing the gate
    double step_gate = 0.05;     // dt * (max|w| + max Gamma) must stay below this
    std::size_t check_interval = 32;
    bool enforce_hygiene = true;
};

/// Trace, Hermiticity and positivity record of master-equation runs.
struct Hygiene {
    double max_trace_error = 0.0;
    double max_hermiticity_error = 0.0;
    double min_eigenvalue = 0.0;
    std::size_t runs = 0;
    std::size_t steps = 0;

    void merge(const Hygiene& other);
    bool ok() const { return max_trace_error < 1e-8 && min_eigenvalue > -1e-9 && max_hermiticity_error < 1e-10; }
};

enum class MotionalBranch { up_phi, down_phi };

struct ReadoutResult {
    double f_plus = 0.0;   // initial |down_phi>, target spin |+>
    double f_minus = 0.0;  // initial |up_phi>, target spin |->
    double f_avg = 0.0;
    double transfer_time = 0.0;  // s
    double g = 0.0;              // rad/s
    double b_y = 0.0;            // T/m
    Hygiene hygiene;
};

/// g = mu_B b_y |z_{nn'}| / hbar.
double spin_motion_coupling(double b_y, double z_tls);
double transfer_time(double b_y, double z_tls);

/// Spin fidelity after pi/(2g) for one initial motional branch.
double readout_fidelity(const TruncatedModel& model, const LindbladSet& lindblad, double b_y, double phi_b,
                        MotionalBranch branch, const MasterOptions& options = {}, Hygiene* hygiene = nullptr);

/// Both branches and their average.
ReadoutResult readout_transfer(const TruncatedModel& model, const LindbladSet& lindblad, double b_y, double phi_b,
                               const MasterOptions& options = {});

struct ReadoutCurve {
    std::vector<ReadoutResult> points;
    std::size_t argmax() const;
    bool interior_maximum() const;
    Hygiene hygiene() const;
};

/// F_avg against transfer time pi/(2g); b_y follows from each time.
ReadoutCurve readout_scan(const TruncatedModel& model, const LindbladSet& lindblad,
                          const std::vector<double>& transfer_times, double phi_b, const MasterOptions& options = {},
                          unsigned jobs = 1);

struct SenseResult {
    double p = 0.0;            // population of the +1 eigenstate of sigma_phi inside the pair
    double leakage = 0.0;      // population outside the pair
    double rabi_frequency = 0.0;
    bool leakage_regime = false;  // Omega_R above a fifth of the effective detuning
    Hygiene hygiene;
};

/// Resonant drive H_z + e z E cos(w t + phi_E) from |psi_n>; p measured with
/// phi = phi_E - phi_z - pi/2, so that p = (1 + sin(Omega_R t))/2 in the ideal limit.
SenseResult sense(const TruncatedModel& model, const LindbladSet& lindblad, double e_amplitude, double phi_e,
                  double t, const MasterOptions& options = {});

struct SusceptibilityCurve {
    std::vector<double> times;     // s
    std::vector<double> numeric;   // (V/m)^-1
    std::vector<double> analytic;  // |mu| exp(-Gamma_fit t) t / 2 hbar
    std::vector<double> leakage;   // at delta_E
    double gamma_fit = 0.0;        // 1/s
    double gamma_leakage_estimate = 0.0;
    Hygiene hygiene;
    std::size_t argmax() const;
    bool interior_maximum() const;
};

/// Numeric susceptibility (p(delta) - p(0))/delta per time, Gamma from a
/// least-squares fit of ln(numeric * 2 hbar / (|mu| t)) = -Gamma t.
SusceptibilityCurve susceptibility(const TruncatedModel& model, const LindbladSet& lindblad,
                                   const std::vector<double>& times, double delta_e,
                                   const MasterOptions& options = {}, unsigned jobs = 1);

/// Noiseless ideal |mu| t / 2 hbar for a dipole in e*um.
double ideal_susceptibility(double mu_e_um, double t);

}  // namespace dipoleforge
