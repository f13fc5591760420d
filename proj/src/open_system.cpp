#include "dipoleforge/open_system.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <numbers>
#include <thread>

#include <fmt/format.h>

#include "dipoleforge/errors.hpp"

namespace dipoleforge {

namespace {

using cd = std::complex<double>;
using Eigen::Index;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;

constexpr double kHbar = PhysConsts::hbar;
constexpr double kE = PhysConsts::elementary_charge;

// c e^{i nu t} |i><j| + h.c., c in rad/s
struct DriveTerm {
    Index i, j;
    cd c;
    double nu;
};

struct Problem {
    MatrixXcd spin;  // S x S factor multiplying the motional drive
    std::vector<DriveTerm> terms;
    const MatrixXd* rates = nullptr;
    Index m = 0;

    Index dim() const { return spin.rows() * m; }
};

// amplitude * Z_I(t) * cos(omega_d t + phase) in the interaction picture of H_z
std::vector<DriveTerm> drive_terms(const TruncatedModel& model, Frame frame, double omega_d, double phase,
                                   double amplitude, double cutoff)
{
    std::vector<DriveTerm> out;
    const Index m = static_cast<Index>(model.size());
    const cd co = 0.5 * amplitude * std::exp(cd(0.0, -phase));
    const cd counter = 0.5 * amplitude * std::exp(cd(0.0, phase));
    for (Index p = 0; p < m; ++p) {
        if (frame == Frame::lab && model.z(p, p) != 0.0)
            out.push_back({p, p, counter * model.z(p, p), omega_d});
        for (Index q = 0; q < p; ++q) {
            const double z = model.z(p, q);
            if (z == 0.0) continue;
            const double w = (model.energies[p] - model.energies[q]) / kHbar;
            const double nu = w - omega_d;
            if (frame == Frame::lab) {
                out.push_back({p, q, co * z, nu});
                out.push_back({p, q, counter * z, w + omega_d});
            } else if (std::abs(nu) < cutoff) {
                out.push_back({p, q, co * z, nu});
            }
        }
    }
    return out;
}

MatrixXcd motional_hamiltonian(const Problem& pb, double t)
{
    MatrixXcd h = MatrixXcd::Zero(pb.m, pb.m);
    for (const auto& term : pb.terms) {
        const cd v = term.c * std::exp(cd(0.0, term.nu * t));
        if (term.i == term.j) {
            h(term.i, term.i) += 2.0 * v.real();
        } else {
            h(term.i, term.j) += v;
            h(term.j, term.i) += std::conj(v);
        }
    }
    return h;
}

MatrixXcd full_hamiltonian(const Problem& pb, double t)
{
    const MatrixXcd hm = motional_hamiltonian(pb, t);
    const Index s = pb.spin.rows();
    if (s == 1) return pb.spin(0, 0) * hm;
    MatrixXcd h(s * pb.m, s * pb.m);
    for (Index a = 0; a < s; ++a)
        for (Index b = 0; b < s; ++b) h.block(a * pb.m, b * pb.m, pb.m, pb.m) = pb.spin(a, b) * hm;
    return h;
}

void add_dissipator(const Problem& pb, const MatrixXcd& rho, MatrixXcd& out)
{
    if (!pb.rates) return;
    const MatrixXd& g = *pb.rates;
    const Index m = pb.m;
    const Index s = pb.spin.rows();
    const Index d = s * m;
    Eigen::VectorXd loss(d);
    for (Index a = 0; a < d; ++a) loss(a) = g.row(a % m).sum();
    for (Index b = 0; b < d; ++b)
        for (Index a = 0; a < d; ++a) out(a, b) -= 0.5 * (loss(a) + loss(b)) * rho(a, b);
    for (Index sa = 0; sa < s; ++sa)
        for (Index sb = 0; sb < s; ++sb)
            for (Index j = 0; j < m; ++j) {
                cd gain = 0.0;
                for (Index i = 0; i < m; ++i)
                    if (g(i, j) != 0.0) gain += g(i, j) * rho(sa * m + i, sb * m + i);
                out(sa * m + j, sb * m + j) += gain;
            }
}

MatrixXcd rhs(const Problem& pb, double t, const MatrixXcd& rho)
{
    const MatrixXcd h = full_hamiltonian(pb, t);
    MatrixXcd out = cd(0.0, -1.0) * (h * rho - rho * h);
    add_dissipator(pb, rho, out);
    return out;
}

void audit(const MatrixXcd& rho, Hygiene& hy)
{
    hy.max_trace_error = std::max(hy.max_trace_error, std::abs(rho.trace() - cd(1.0, 0.0)));
    hy.max_hermiticity_error = std::max(hy.max_hermiticity_error, (rho - rho.adjoint()).cwiseAbs().maxCoeff());
    const MatrixXcd herm = 0.5 * (rho + rho.adjoint());
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(herm, Eigen::EigenvaluesOnly);
    hy.min_eigenvalue = std::min(hy.min_eigenvalue, es.eigenvalues().minCoeff());
}

double rate_scale(const Problem& pb)
{
    double nu = 0.0;
    Eigen::VectorXd row = Eigen::VectorXd::Zero(pb.m);
    for (const auto& term : pb.terms) {
        nu = std::max(nu, std::abs(term.nu));
        const double mag = std::abs(term.c) * (term.i == term.j ? 2.0 : 1.0);
        row(term.i) += mag;
        if (term.i != term.j) row(term.j) += mag;
    }
    const double spin_norm = pb.spin.cwiseAbs().rowwise().sum().maxCoeff();
    double gamma = 0.0;
    if (pb.rates)
        for (Index i = 0; i < pb.m; ++i) gamma = std::max(gamma, pb.rates->row(i).sum());
    return nu + spin_norm * (pb.m ? row.maxCoeff() : 0.0) + gamma;
}

MatrixXcd evolve(const Problem& pb, MatrixXcd rho, double t_end, const MasterOptions& opt, Hygiene& hy)
{
    if (!(t_end > 0.0)) throw InputError("t", "evolution time must be positive");
    const double scale = rate_scale(pb);
    const double dt_max = scale > 0.0 ? opt.step_gate / scale : t_end;
    double dt = opt.dt > 0.0 ? opt.dt : dt_max;
    if (opt.dt > 0.0 && opt.dt * scale >= opt.step_gate)
        throw Refusal("dt", fmt::format("dt*(max|w|+max rate) = {:.3g} >= {}", opt.dt * scale, opt.step_gate),
                      fmt::format("dt <= {:.4g} s", dt_max));
    const auto steps = static_cast<std::size_t>(std::ceil(t_end / dt - 1e-9));
    dt = t_end / static_cast<double>(std::max<std::size_t>(steps, 1));
    const std::size_t interval = std::max<std::size_t>(opt.check_interval, 1);

    Hygiene local;
    audit(rho, local);
    double t = 0.0;
    for (std::size_t k = 0; k < std::max<std::size_t>(steps, 1); ++k) {
        const MatrixXcd k1 = rhs(pb, t, rho);
        const MatrixXcd k2 = rhs(pb, t + 0.5 * dt, rho + 0.5 * dt * k1);
        const MatrixXcd k3 = rhs(pb, t + 0.5 * dt, rho + 0.5 * dt * k2);
        const MatrixXcd k4 = rhs(pb, t + dt, rho + dt * k3);
        rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += dt;
        if ((k + 1) % interval == 0) audit(rho, local);
    }
    audit(rho, local);
    local.runs = 1;
    local.steps = std::max<std::size_t>(steps, 1);
    if (opt.enforce_hygiene && !local.ok())
        throw Refusal("hygiene",
                      fmt::format("density matrix drifted: trace {:.2e}, hermiticity {:.2e}, min eigenvalue {:.2e}",
                                  local.max_trace_error, local.max_hermiticity_error, local.min_eigenvalue),
                      "reduce dt");
    hy.merge(local);
    return rho;
}

template <class F>
void parallel_for(std::size_t count, unsigned jobs, F&& body)
{
    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
    if (jobs == 1) {
        for (std::size_t k = 0; k < count; ++k) body(k);
        return;
    }
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(jobs);
    for (unsigned j = 0; j < jobs; ++j)
        workers.emplace_back([&, j] {
            try {
                for (std::size_t k = j; k < count; k += jobs) body(k);
            } catch (...) {
                errors[j] = std::current_exception();
            }
        });
    for (auto& w : workers) w.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

double cutoff_for(const MasterOptions& opt, double omega_d)
{
    return opt.rwa_cutoff > 0.0 ? opt.rwa_cutoff : 0.5 * omega_d;
}

void check_rates(const TruncatedModel& model, const LindbladSet& lindblad)
{
    const auto m = static_cast<Index>(model.size());
    if (lindblad.rates.rows() != m || lindblad.rates.cols() != m)
        throw InputError("lindblad", "rate matrix does not match the basis");
    if ((lindblad.rates.array() < 0.0).any()) throw InputError("lindblad", "negative rate");
}

// min over i in the pair, j outside of (|z_nn'| / |z_ij|) * ||w_ij| - |w_nn'||
double model_detuning(const TruncatedModel& model)
{
    const Index pn = static_cast<Index>(model.pos(model.n));
    const Index pp = static_cast<Index>(model.pos(model.n_prime));
    const double w0 = std::abs(model.omega_tls());
    const double z0 = std::abs(model.z_tls());
    double best = std::numeric_limits<double>::infinity();
    for (Index i : {pn, pp})
        for (Index j = 0; j < static_cast<Index>(model.size()); ++j) {
            if (j == pn || j == pp) continue;
            const double zij = std::abs(model.z(i, j));
            if (zij == 0.0) continue;
            const double w = std::abs(model.energies[i] - model.energies[j]) / kHbar;
            best = std::min(best, z0 / zij * std::abs(w - w0));
        }
    return best;
}

}  // namespace

// ---------------------------------------------------------------------------

double NoiseSpec::spectral_density(double omega) const
{
    if (!(omega > 0.0)) throw InputError("omega", "noise spectrum needs a positive frequency");
    return s0 * std::pow(omega0 / omega, alpha);
}

void NoiseSpec::validate() const
{
    if (!(s0 >= 0.0) || !std::isfinite(s0)) throw InputError("noise.s0", "must be finite and non-negative");
    if (!(omega0 > 0.0)) throw InputError("noise.omega0", "must be positive");
    if (!std::isfinite(alpha)) throw InputError("noise.alpha", "must be finite");
}

std::size_t TruncatedModel::pos(std::size_t global) const
{
    if (global < k_lo || global > k_hi) throw InputError("basis", fmt::format("state {} outside the basis", global));
    return global - k_lo;
}

double TruncatedModel::omega(std::size_t i, std::size_t j) const
{
    return (energies.at(pos(i)) - energies.at(pos(j))) / kHbar;
}

double TruncatedModel::z_tls() const
{
    return z(static_cast<Index>(pos(n)), static_cast<Index>(pos(n_prime)));
}

double TruncatedModel::phi_z() const { return z_tls() < 0.0 ? std::numbers::pi : 0.0; }

double TruncatedModel::mu_tls() const { return std::abs(z_tls()) * 1e6; }

TruncatedModel truncated_model(const DipoleTable& table, std::size_t k_lo, std::size_t k_hi, std::size_t n,
                               std::size_t n_prime)
{
    if (k_hi <= k_lo) throw InputError("basis", "needs at least two states");
    if (!table.contains(k_lo) || !table.contains(k_hi))
        throw InputError("basis", fmt::format("[{}, {}] not inside the table [{}, {}]", k_lo, k_hi, table.n_lo(),
                                              table.n_hi()));
    if (k_hi - k_lo > table.bandwidth())
        throw InputError("basis", fmt::format("basis of {} states needs dipole bandwidth {}, table has {}",
                                              k_hi - k_lo + 1, k_hi - k_lo, table.bandwidth()));
    if (n == n_prime) throw InputError("tls", "pair needs two distinct states");
    if (n < k_lo || n > k_hi || n_prime < k_lo || n_prime > k_hi) throw InputError("tls", "pair outside the basis");
    if (table.energy(n) < table.energy(n_prime)) std::swap(n, n_prime);

    const std::size_t size = k_hi - k_lo + 1;
    if (size > 2) {
        const std::size_t low = std::min(n, n_prime);
        const std::size_t high = std::max(n, n_prime);
        const std::size_t want_below = std::min<std::size_t>(4, low);
        const std::size_t want_above = 4;
        if (low - k_lo < want_below || k_hi - high < want_above)
            throw InputError("basis", fmt::format("needs {} guard states below and {} above the pair ({}, {})",
                                                  want_below, want_above, n, n_prime));
    }

    TruncatedModel model;
    model.k_lo = k_lo;
    model.k_hi = k_hi;
    model.n = n;
    model.n_prime = n_prime;
    model.energies.resize(size);
    model.z.resize(static_cast<Index>(size), static_cast<Index>(size));
    for (std::size_t i = 0; i < size; ++i) {
        model.energies[i] = table.energy(k_lo + i);
        for (std::size_t j = 0; j < size; ++j) model.z(i, j) = table.z(k_lo + i, k_lo + j);
    }
    const double herm = (model.z - model.z.transpose()).cwiseAbs().maxCoeff();
    const double zmax = model.z.cwiseAbs().maxCoeff();
    if (herm > 1e-12 * std::max(zmax, 1e-30))
        throw Refusal("hermiticity", fmt::format("dipole matrix asymmetric by {:.3g} m", herm),
                      "recompute the dipole table");
    return model;
}

TruncatedModel two_level_model(double omega, double z_tls)
{
    if (!(omega > 0.0)) throw InputError("omega", "must be positive");
    if (!(z_tls != 0.0) || !std::isfinite(z_tls)) throw InputError("z", "must be finite and nonzero");
    TruncatedModel model;
    model.k_lo = 0;
    model.k_hi = 1;
    model.n = 1;
    model.n_prime = 0;
    model.energies = {0.0, kHbar * omega};
    model.z = MatrixXd::Zero(2, 2);
    model.z(0, 1) = model.z(1, 0) = z_tls;
    return model;
}

double LindbladSet::max_rate() const
{
    double best = 0.0;
    for (Index i = 0; i < rates.rows(); ++i) best = std::max(best, rates.row(i).sum());
    return best;
}

LindbladSet LindbladSet::scaled(double factor) const
{
    if (!(factor >= 0.0)) throw InputError("noise.scale", "must be non-negative");
    LindbladSet out = *this;
    out.rates *= factor;
    return out;
}

LindbladSet noise_rates(const TruncatedModel& model, const NoiseSpec& noise)
{
    noise.validate();
    const auto m = static_cast<Index>(model.size());
    LindbladSet set;
    set.rates = MatrixXd::Zero(m, m);
    for (Index i = 0; i < m; ++i)
        for (Index j = 0; j < m; ++j) {
            if (i == j) continue;
            const double w = std::abs(model.energies[i] - model.energies[j]) / kHbar;
            if (w == 0.0) {
                set.warnings.push_back(fmt::format("degenerate pair ({}, {}) skipped", model.k_lo + i, model.k_lo + j));
                continue;
            }
            const double z = model.z(i, j);
            set.rates(i, j) = kE * kE * z * z * noise.spectral_density(w) / (2.0 * kHbar * kHbar);
        }
    return set;
}

LindbladSet no_noise(const TruncatedModel& model)
{
    const auto m = static_cast<Index>(model.size());
    return {MatrixXd::Zero(m, m), {}};
}

double leakage_rate_estimate(const TruncatedModel& model, const LindbladSet& lindblad)
{
    const std::size_t pn = model.pos(model.n), pp = model.pos(model.n_prime);
    double sum = 0.0;
    for (std::size_t k = 0; k < model.size(); ++k) {
        if (k == pn || k == pp) continue;
        sum += lindblad.rates(pn, k) + lindblad.rates(pp, k);
    }
    return 0.5 * sum;
}

Frame parse_frame(const std::string& name)
{
    if (name == "lab") return Frame::lab;
    if (name == "rwa") return Frame::rwa;
    throw InputError("frame", fmt::format("unknown frame '{}' (lab or rwa)", name));
}

std::string to_string(Frame frame) { return frame == Frame::lab ? "lab" : "rwa"; }

void Hygiene::merge(const Hygiene& other)
{
    max_trace_error = std::max(max_trace_error, other.max_trace_error);
    max_hermiticity_error = std::max(max_hermiticity_error, other.max_hermiticity_error);
    min_eigenvalue = std::min(min_eigenvalue, other.min_eigenvalue);
    runs += other.runs;
    steps += other.steps;
}

// ---------------------------------------------------------------------------

double spin_motion_coupling(double b_y, double z_tls)
{
    return PhysConsts::bohr_magneton * std::abs(b_y) * std::abs(z_tls) / kHbar;
}

double transfer_time(double b_y, double z_tls)
{
    const double g = spin_motion_coupling(b_y, z_tls);
    if (!(g > 0.0)) throw InputError("b_y", "coupling vanishes");
    return std::numbers::pi / (2.0 * g);
}

double readout_fidelity(const TruncatedModel& model, const LindbladSet& lindblad, double b_y, double phi_b,
                        MotionalBranch branch, const MasterOptions& options, Hygiene* hygiene)
{
    check_rates(model, lindblad);
    if (!(b_y > 0.0)) throw InputError("b_y", "must be positive");
    const double omega_d = model.omega_tls();
    const double t = transfer_time(b_y, model.z_tls());

    Problem pb;
    pb.m = static_cast<Index>(model.size());
    pb.spin.resize(2, 2);
    pb.spin << 0.0, cd(0.0, -1.0), cd(0.0, 1.0), 0.0;
    pb.terms = drive_terms(model, options.frame, omega_d, phi_b, -PhysConsts::bohr_magneton * b_y / kHbar,
                           cutoff_for(options, omega_d));
    pb.rates = &lindblad.rates;

    const double phi = phi_b - model.phi_z();
    const double sign = branch == MotionalBranch::up_phi ? 1.0 : -1.0;
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(2 * pb.m);
    psi(static_cast<Index>(model.pos(model.n))) = 1.0 / std::sqrt(2.0);
    psi(static_cast<Index>(model.pos(model.n_prime))) = sign * std::exp(cd(0.0, phi)) / std::sqrt(2.0);
    MatrixXcd rho = psi * psi.adjoint();

    Hygiene local;
    rho = evolve(pb, rho, t, options, local);
    if (hygiene) hygiene->merge(local);

    Eigen::Matrix2cd spin = Eigen::Matrix2cd::Zero();
    for (Index a = 0; a < 2; ++a)
        for (Index b = 0; b < 2; ++b) spin(a, b) = rho.block(a * pb.m, b * pb.m, pb.m, pb.m).trace();
    // down_phi ends in |+>, up_phi in |->
    Eigen::Vector2cd target(1.0 / std::sqrt(2.0), -sign / std::sqrt(2.0));
    return std::real(target.dot(spin * target));
}

ReadoutResult readout_transfer(const TruncatedModel& model, const LindbladSet& lindblad, double b_y, double phi_b,
                               const MasterOptions& options)
{
    ReadoutResult r;
    r.b_y = b_y;
    r.g = spin_motion_coupling(b_y, model.z_tls());
    r.transfer_time = transfer_time(b_y, model.z_tls());
    r.f_plus = readout_fidelity(model, lindblad, b_y, phi_b, MotionalBranch::down_phi, options, &r.hygiene);
    r.f_minus = readout_fidelity(model, lindblad, b_y, phi_b, MotionalBranch::up_phi, options, &r.hygiene);
    r.f_avg = 0.5 * (r.f_plus + r.f_minus);
    return r;
}

std::size_t ReadoutCurve::argmax() const
{
    if (points.empty()) throw InputError("times", "empty readout curve");
    std::size_t best = 0;
    for (std::size_t k = 1; k < points.size(); ++k)
        if (points[k].f_avg > points[best].f_avg) best = k;
    return best;
}

bool ReadoutCurve::interior_maximum() const
{
    const std::size_t k = argmax();
    return k > 0 && k + 1 < points.size();
}

Hygiene ReadoutCurve::hygiene() const
{
    Hygiene h;
    for (const auto& p : points) h.merge(p.hygiene);
    return h;
}

ReadoutCurve readout_scan(const TruncatedModel& model, const LindbladSet& lindblad,
                          const std::vector<double>& transfer_times, double phi_b, const MasterOptions& options,
                          unsigned jobs)
{
    if (transfer_times.empty()) throw InputError("times", "needs at least one transfer time");
    for (double t : transfer_times)
        if (!(t > 0.0)) throw InputError("times", "transfer times must be positive");
    ReadoutCurve curve;
    curve.points.resize(transfer_times.size());
    const double z = std::abs(model.z_tls());
    parallel_for(transfer_times.size(), jobs, [&](std::size_t k) {
        const double g = std::numbers::pi / (2.0 * transfer_times[k]);
        const double b_y = kHbar * g / (PhysConsts::bohr_magneton * z);
        curve.points[k] = readout_transfer(model, lindblad, b_y, phi_b, options);
    });
    return curve;
}

SenseResult sense(const TruncatedModel& model, const LindbladSet& lindblad, double e_amplitude, double phi_e,
                  double t, const MasterOptions& options)
{
    check_rates(model, lindblad);
    if (!(e_amplitude >= 0.0)) throw InputError("e_amplitude", "must be non-negative");
    const double omega_d = model.omega_tls();

    Problem pb;
    pb.m = static_cast<Index>(model.size());
    pb.spin = MatrixXcd::Identity(1, 1);
    pb.terms = drive_terms(model, options.frame, omega_d, phi_e, kE * e_amplitude / kHbar,
                           cutoff_for(options, omega_d));
    pb.rates = &lindblad.rates;

    const Index pn = static_cast<Index>(model.pos(model.n));
    const Index pp = static_cast<Index>(model.pos(model.n_prime));
    MatrixXcd rho = MatrixXcd::Zero(pb.m, pb.m);
    rho(pn, pn) = 1.0;

    SenseResult r;
    r.rabi_frequency = kE * e_amplitude * std::abs(model.z_tls()) / kHbar;
    if (model.size() > 2) r.leakage_regime = r.rabi_frequency > model_detuning(model) / 5.0;
    rho = evolve(pb, rho, t, options, r.hygiene);

    const double phi = phi_e - model.phi_z() - 0.5 * std::numbers::pi;
    Eigen::VectorXcd plus = Eigen::VectorXcd::Zero(pb.m);
    plus(pn) = 1.0 / std::sqrt(2.0);
    plus(pp) = std::exp(cd(0.0, phi)) / std::sqrt(2.0);
    r.p = std::real(plus.dot(rho * plus));
    r.leakage = std::max(0.0, 1.0 - std::real(rho(pn, pn) + rho(pp, pp)));
    return r;
}

std::size_t SusceptibilityCurve::argmax() const
{
    if (numeric.empty()) throw InputError("times", "empty susceptibility curve");
    return static_cast<std::size_t>(std::max_element(numeric.begin(), numeric.end()) - numeric.begin());
}

bool SusceptibilityCurve::interior_maximum() const
{
    const std::size_t k = argmax();
    return k > 0 && k + 1 < numeric.size();
}

double ideal_susceptibility(double mu_e_um, double t) { return kE * mu_e_um * 1e-6 * t / (2.0 * kHbar); }

SusceptibilityCurve susceptibility(const TruncatedModel& model, const LindbladSet& lindblad,
                                   const std::vector<double>& times, double delta_e, const MasterOptions& options,
                                   unsigned jobs)
{
    if (times.empty()) throw InputError("times", "needs at least one time");
    if (!(delta_e > 0.0)) throw InputError("delta_e", "must be positive");
    const double t_max = *std::max_element(times.begin(), times.end());
    const double omega_per_field = kE * std::abs(model.z_tls()) / kHbar;
    if (omega_per_field * delta_e * t_max >= 0.1)
        throw Refusal("linear-window",
                      fmt::format("Omega_R t = {:.3g} at the longest time", omega_per_field * delta_e * t_max),
                      fmt::format("delta_e <= {:.4g} V/m", 0.1 / (omega_per_field * t_max)));

    SusceptibilityCurve c;
    c.times = times;
    c.numeric.assign(times.size(), 0.0);
    c.leakage.assign(times.size(), 0.0);
    std::vector<Hygiene> hy(times.size());
    parallel_for(times.size(), jobs, [&](std::size_t k) {
        const SenseResult on = sense(model, lindblad, delta_e, 0.0, times[k], options);
        const SenseResult off = sense(model, lindblad, 0.0, 0.0, times[k], options);
        c.numeric[k] = (on.p - off.p) / delta_e;
        c.leakage[k] = on.leakage;
        hy[k] = on.hygiene;
        hy[k].merge(off.hygiene);
    });
    for (const auto& h : hy) c.hygiene.merge(h);

    const double mu = model.mu_tls();
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < times.size(); ++k) {
        const double ratio = c.numeric[k] / ideal_susceptibility(mu, times[k]);
        if (!(ratio > 0.0)) continue;
        num += times[k] * std::log(ratio);
        den += times[k] * times[k];
    }
    c.gamma_fit = den > 0.0 ? -num / den : 0.0;
    c.gamma_leakage_estimate = leakage_rate_estimate(model, lindblad);
    c.analytic.resize(times.size());
    for (std::size_t k = 0; k < times.size(); ++k)
        c.analytic[k] = ideal_susceptibility(mu, times[k]) * std::exp(-c.gamma_fit * times[k]);
    return c;
}

}  // namespace dipoleforge
