#include "dipoleforge/tridiagonal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

namespace dipoleforge {

namespace {

constexpr double eps = std::numeric_limits<double>::epsilon();

class SturmCounter {
public:
    explicit SturmCounter(const SymTridiagonal& t) : d_(t.diag), e2_(t.off.size())
    {
        double max_e2 = 1.0;
        for (std::size_t i = 0; i < t.off.size(); ++i) {
            e2_[i] = t.off[i] * t.off[i];
            max_e2 = std::max(max_e2, e2_[i]);
        }
        pivmin_ = std::numeric_limits<double>::min() * max_e2;
    }

    std::size_t operator()(double x) const
    {
        const std::size_t n = d_.size();
        std::size_t count = 0;
        double q = d_[0] - x;
        if (std::abs(q) < pivmin_) q = -pivmin_;
        count += q < 0.0;
        for (std::size_t i = 1; i < n; ++i) {
            q = d_[i] - x - e2_[i - 1] / q;
            if (std::abs(q) < pivmin_) q = -pivmin_;
            count += q < 0.0;
        }
        return count;
    }

private:
    const std::vector<double>& d_;
    std::vector<double> e2_;
    double pivmin_;
};

double matrix_norm(const SymTridiagonal& t)
{
    const auto [lo, hi] = gershgorin_bounds(t);
    return std::max(std::abs(lo), std::abs(hi));
}

// Bisection for a contiguous index slice sharing bounds between eigenvalues.
void bisect_slice(const SturmCounter& count, double glo, double ghi, double tnorm, std::size_t k_lo,
                  std::span<double> out)
{
    const std::size_t m = out.size();
    std::vector<double> lo(m, glo), hi(m, ghi);
    for (std::size_t k = 0; k < m; ++k) {
        if (k > 0) lo[k] = std::max(lo[k], lo[k - 1]);
        for (;;) {
            const double width = hi[k] - lo[k];
            const double tol = 2.0 * eps * std::max(std::abs(lo[k]), std::abs(hi[k])) + eps * tnorm;
            if (width <= tol) break;
            const double mid = lo[k] + 0.5 * width;
            if (mid <= lo[k] || mid >= hi[k]) break;
            const std::size_t c = count(mid);
            for (std::size_t j = k; j < m; ++j) {
                if (k_lo + j < c)
                    hi[j] = std::min(hi[j], mid);
                else
                    lo[j] = std::max(lo[j], mid);
            }
        }
        out[k] = lo[k] + 0.5 * (hi[k] - lo[k]);
    }
}

struct PivotedLU {
    std::vector<double> dl, d, du, du2;
    std::vector<unsigned char> swapped;

    PivotedLU(const SymTridiagonal& t, double shift, double tiny)
        : dl(t.off), d(t.diag), du(t.off), du2(t.size() > 2 ? t.size() - 2 : 0, 0.0), swapped(t.off.size(), 0)
    {
        const std::size_t n = d.size();
        for (auto& v : d) v -= shift;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            if (std::abs(d[i]) >= std::abs(dl[i])) {
                if (d[i] == 0.0) d[i] = tiny;
                const double fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                const double fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                const double temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if (i + 2 < n) {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = 1;
            }
        }
        if (d[n - 1] == 0.0) d[n - 1] = tiny;
    }

    void solve(std::span<double> b) const
    {
        const std::size_t n = d.size();
        for (std::size_t i = 0; i + 1 < n; ++i) {
            if (!swapped[i]) {
                b[i + 1] -= dl[i] * b[i];
            } else {
                const double temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - dl[i] * b[i];
            }
        }
        b[n - 1] /= d[n - 1];
        if (n > 1) b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
        for (std::size_t i = n - 2; i-- > 0;) b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / d[i];
    }
};

double norm2(std::span<const double> v) { return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0)); }

}  // namespace

void SymTridiagonal::multiply(std::span<const double> x, std::span<double> y) const
{
    const std::size_t n = size();
    for (std::size_t i = 0; i < n; ++i) y[i] = diag[i] * x[i];
    for (std::size_t i = 0; i + 1 < n; ++i) {
        y[i] += off[i] * x[i + 1];
        y[i + 1] += off[i] * x[i];
    }
}

std::size_t sturm_count(const SymTridiagonal& t, double x)
{
    if (t.size() == 0) return 0;
    return SturmCounter(t)(x);
}

std::pair<double, double> gershgorin_bounds(const SymTridiagonal& t)
{
    const std::size_t n = t.size();
    if (n == 0) throw std::invalid_argument("gershgorin_bounds: empty matrix");
    double lo = std::numeric_limits<double>::max(), hi = std::numeric_limits<double>::lowest();
    for (std::size_t i = 0; i < n; ++i) {
        double r = 0.0;
        if (i > 0) r += std::abs(t.off[i - 1]);
        if (i + 1 < n) r += std::abs(t.off[i]);
        lo = std::min(lo, t.diag[i] - r);
        hi = std::max(hi, t.diag[i] + r);
    }
    const double pad = 2.0 * eps * std::max(std::abs(lo), std::abs(hi)) + std::numeric_limits<double>::min();
    return {lo - pad, hi + pad};
}

std::vector<double> eigenvalues_by_index(const SymTridiagonal& t, std::size_t k_lo, std::size_t k_hi, unsigned jobs)
{
    if (t.off.size() + 1 != t.size()) throw std::invalid_argument("eigenvalues_by_index: malformed matrix");
    if (k_hi < k_lo || k_hi >= t.size()) throw std::invalid_argument("eigenvalues_by_index: index range outside matrix");
    const auto [glo, ghi] = gershgorin_bounds(t);
    const double tnorm = std::max(std::abs(glo), std::abs(ghi));
    const SturmCounter count(t);
    const std::size_t m = k_hi - k_lo + 1;
    std::vector<double> out(m);
    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(m)));
    if (jobs == 1) {
        bisect_slice(count, glo, ghi, tnorm, k_lo, out);
        return out;
    }
    std::vector<std::thread> workers;
    const std::size_t chunk = (m + jobs - 1) / jobs;
    for (std::size_t start = 0; start < m; start += chunk) {
        const std::size_t len = std::min(chunk, m - start);
        workers.emplace_back([&, start, len] {
            bisect_slice(count, glo, ghi, tnorm, k_lo + start, std::span<double>(out).subspan(start, len));
        });
    }
    for (auto& w : workers) w.join();
    return out;
}

InverseIterationResult inverse_iteration(const SymTridiagonal& t, double lambda,
                                         std::span<const std::vector<double>* const> deflate, double residual_tol,
                                         unsigned seed, const MatVec& apply)
{
    const std::size_t n = t.size();
    const double tnorm = matrix_norm(t);
    const PivotedLU lu(t, lambda, eps * tnorm);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> x(n), tx(n), rhs, corr;
    auto product = [&](std::span<const double> in, std::span<double> out) {
        if (apply)
            apply(in, out);
        else
            t.multiply(in, out);
    };
    for (auto& v : x) v = dist(rng);

    auto orthonormalize = [&] {
        for (const auto* q : deflate) {
            const double c = std::inner_product(x.begin(), x.end(), q->begin(), 0.0);
            for (std::size_t i = 0; i < n; ++i) x[i] -= c * (*q)[i];
        }
        const double nrm = norm2(x);
        for (auto& v : x) v /= nrm;
    };
    orthonormalize();

    InverseIterationResult result{{}, lambda, 0.0, 0, false};
    constexpr int max_iterations = 8;
    double previous = std::numeric_limits<double>::infinity();
    for (int it = 1; it <= max_iterations; ++it) {
        if (apply) rhs = x;
        lu.solve(x);
        if (apply) {
            // r = rhs - (T - lambda) x, then x += (T - lambda)^-1 r
            product(x, tx);
            corr.resize(n);
            for (std::size_t i = 0; i < n; ++i) corr[i] = rhs[i] - (tx[i] - lambda * x[i]);
            lu.solve(corr);
            for (std::size_t i = 0; i < n; ++i) x[i] += corr[i];
        }
        orthonormalize();
        product(x, tx);
        const double rq = std::inner_product(x.begin(), x.end(), tx.begin(), 0.0);
        double r2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) r2 += (tx[i] - rq * x[i]) * (tx[i] - rq * x[i]);
        result.eigenvalue = rq;
        result.residual = std::sqrt(r2);
        result.iterations = it;
        if (it >= 2 && result.residual <= residual_tol) {
            result.converged = true;
            break;
        }
        // stagnation at the rounding floor
        if (it >= 3 && result.residual > 0.5 * previous) break;
        previous = result.residual;
    }
    // Deterministic sign: first significant entry positive.
    const double vmax = std::abs(*std::max_element(x.begin(), x.end(), [](double a, double b) {
        return std::abs(a) < std::abs(b);
    }));
    for (double v : x) {
        if (std::abs(v) > 1e-3 * vmax) {
            if (v < 0.0)
                for (auto& w : x) w = -w;
            break;
        }
    }
    result.vector = std::move(x);
    return result;
}

std::size_t count_sign_changes(std::span<const double> v, double rel_floor)
{
    double vmax = 0.0;
    for (double x : v) vmax = std::max(vmax, std::abs(x));
    const double floor = rel_floor * vmax;
    int last = 0;
    std::size_t changes = 0;
    for (double x : v) {
        if (std::abs(x) <= floor) continue;
        const int s = x > 0.0 ? 1 : -1;
        if (last != 0 && s != last) ++changes;
        last = s;
    }
    return changes;
}

}  // namespace dipoleforge
