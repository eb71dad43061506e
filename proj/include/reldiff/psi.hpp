#pragma once

// Construction of the auxiliary function psi solving
//
//   psi'' - (beta g - (d-1)/(r(1+eta^2))) psi' - (d-1)/(r^2(1+eta^2)) psi + beta h = 0,
//   psi(0) = 0,  psi, psi' = O(e^{eps' r}) with eps' < beta*eps/2,
//
// by two routes:
//
//  * d = 1 closed form:     psi(r) = beta int_0^r [int_rho^inf e^{-beta G} h] e^{beta G(rho)} drho
//  * general construction:  psi = beta Psi(h), where Psi is the
//    variation-of-constants operator built from the homogeneous pair
//    (zeta1 bounded near infinity, zeta2 ~ r near 0) and their Wronskian
//    w = a_beta mu^{1-d} e^{beta G}.
//
// zeta1 and zeta2 come from contraction fixed points (tabulated with the
// trapezoid of the grid's linear interpolant) on the ranges where their
// kernels contract, and are continued across the rest of the grid by
// adaptive Runge-Kutta on the homogeneous equation.
//
// Every solution carries a finite-difference residual diagnostic that is
// deliberately independent of the construction path.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "reldiff/grid.hpp"
#include "reldiff/model.hpp"
#include "reldiff/ode.hpp"

namespace reldiff {

enum class PsiMethod { d1_closed_form, general_Psi };

struct PsiSolution {
    RadialGrid grid;
    std::vector<double> psi;
    std::vector<double> psi_prime;
    std::vector<double> residual;  // per-node finite-difference residual of the ODE
    PsiMethod method = PsiMethod::general_Psi;
    double residual_sup = 0.0;     // sup over [2 r_min, R_max/2]
    double tail_truncation = 0.0;  // estimated mass dropped beyond R_max in the defining integrals

    // psi(0) = 0; below the first node the table extends linearly through 0.
    double value(double r) const {
        if (r < grid.r_min()) return psi[0] * (r / grid.r_min());
        return hermite_interp(grid, psi, psi_prime, r);
    }
    double derivative(double r) const { return linear_interp(grid, psi_prime, r); }
};

struct HomogeneousPair {
    RadialGrid grid;
    std::vector<double> zeta1, zeta1_prime;
    std::vector<double> zeta2, zeta2_prime;
    double a_beta = 0.0;            // Wronskian constant: w = a_beta mu^{1-d} e^{beta G}
    double wronskian_spread = 0.0;  // max relative deviation of the fitted constant across nodes
    int fixed_point_iterations = 0;
    double fixed_point_residual = 0.0;
    double r0 = 0.0;  // zeta1 fixed-point range starts here
    double r1 = 0.0;  // zeta2 fixed-point range ends here
    std::vector<double> zeta1_diffs, zeta2_diffs;  // sup |phi_{n+1} - phi_n| per iteration
};

namespace detail {

struct CoeffTables {
    std::vector<double> r, g, h, mu, G, inv1pe2;  // inv1pe2 = 1/(1+eta^2)
    std::vector<double> wm;                       // mu^{d-1} e^{-beta G}
    std::vector<double> inv_wm;
};

inline CoeffTables tabulate_coeffs(const DerivedCoefficients& dc, const RadialGrid& grid) {
    const std::size_t n = grid.size();
    const int d = dc.dimension();
    const double beta = dc.beta();
    CoeffTables t;
    t.r = grid.nodes;
    t.g.resize(n);
    t.h.resize(n);
    t.mu.resize(n);
    t.G.resize(n);
    t.inv1pe2.resize(n);
    t.wm.resize(n);
    t.inv_wm.resize(n);
    const bool closed_G = dc.spec().G_closed.has_value();
    for (std::size_t i = 0; i < n; ++i) {
        const double r = grid.nodes[i];
        t.g[i] = dc.g(r);
        t.h[i] = dc.h(r);
        t.mu[i] = dc.mu(r);
        const double e = dc.spec().eta_at(r);
        t.inv1pe2[i] = 1.0 / (1.0 + e * e);
        if (closed_G) t.G[i] = dc.G(r);
    }
    if (!closed_G) {
        // Cumulative trapezoid of g over this same grid; g(0) = 0 by definition.
        const auto cum = cumulative_from_zero(grid, t.g, 0.0);
        t.G = cum;
    }
    for (std::size_t i = 0; i < n; ++i) {
        t.wm[i] = std::pow(t.mu[i], d - 1) * std::exp(-beta * t.G[i]);
        t.inv_wm[i] = 1.0 / t.wm[i];
    }
    return t;
}

// Suffix trapezoid over the index window [i0, n) with an additive tail.
inline std::vector<double> suffix_trapezoid(std::span<const double> r, std::span<const double> f,
                                            std::size_t i0, double tail) {
    const std::size_t n = r.size();
    std::vector<double> s(n - i0);
    s.back() = tail;
    for (std::size_t j = n - i0 - 1; j-- > 0;) {
        const std::size_t i = i0 + j;
        s[j] = s[j + 1] + 0.5 * (f[i - i0] + f[i - i0 + 1]) * (r[i + 1] - r[i]);
    }
    return s;
}

// Prefix trapezoid over [0, i1] assuming f -> 0 at r = 0.
inline std::vector<double> prefix_trapezoid(std::span<const double> r, std::span<const double> f,
                                            std::size_t i1) {
    std::vector<double> c(i1 + 1);
    c[0] = 0.5 * f[0] * r[0];
    for (std::size_t i = 1; i <= i1; ++i)
        c[i] = c[i - 1] + 0.5 * (f[i] + f[i - 1]) * (r[i] - r[i - 1]);
    return c;
}

// Homogeneous equation as a first-order system for (zeta, zeta').
inline OdeRhs<2> homogeneous_rhs(const DerivedCoefficients& dc) {
    const double beta = dc.beta();
    const int d = dc.dimension();
    return [&dc, beta, d](double r, const OdeState<2>& y) -> OdeState<2> {
        const double e = dc.spec().eta_at(r);
        const double inv1pe2 = 1.0 / (1.0 + e * e);
        const double a = beta * dc.g(r) - (d - 1) * inv1pe2 / r;
        const double b = (d - 1) * inv1pe2 / (r * r);
        return {y[1], a * y[1] + b * y[0]};
    };
}

}  // namespace detail

// zeta1: solution bounded near infinity with zeta1 -> 1, from the fixed point
//   phi_{n+1}(r) = 1 + (d-1) int_r^inf mu^{1-d} e^{beta G}
//                      [ int_rho^inf e^{-beta G} mu^{d-1} (1+eta^2)^{-1} s^{-2} phi_n ds ] drho
// on [r0, R_max] with lambda(r0) <= 1/(2d), continued below r0 by backward
// integration of the homogeneous equation. For d = 1 the kernel vanishes and
// zeta1 == 1 exactly, without iterating.
inline void build_zeta1(const DerivedCoefficients& dc, const RadialGrid& grid,
                        const detail::CoeffTables& t, HomogeneousPair& pair,
                        double fp_tol = 1e-10) {
    const std::size_t n = grid.size();
    const int d = dc.dimension();
    pair.zeta1.assign(n, 1.0);
    pair.zeta1_prime.assign(n, 0.0);
    if (d == 1) {
        pair.r0 = grid.r_min();
        return;
    }

    // lambda on the grid: same double integral with phi == 1.
    std::vector<double> inner_ig(n), lambda_ig(n);
    for (std::size_t i = 0; i < n; ++i)
        inner_ig[i] = t.wm[i] * t.inv1pe2[i] / (t.r[i] * t.r[i]);
    {
        TailEstimate te = fit_exponential_tail(t.r, inner_ig);
        auto inner = detail::suffix_trapezoid(t.r, inner_ig, 0, te.value);
        for (std::size_t i = 0; i < n; ++i) lambda_ig[i] = t.inv_wm[i] * inner[i];
    }
    const double lam_tail = fit_powerlaw_tail(t.r, lambda_ig);
    auto lambda = detail::suffix_trapezoid(t.r, lambda_ig, 0, lam_tail);

    std::size_t i0 = n;
    for (std::size_t i = 0; i < n; ++i)
        if (lambda[i] <= 1.0 / (2.0 * d)) {
            i0 = i;
            break;
        }
    if (i0 + 32 > n)
        throw std::runtime_error("build_zeta1: contraction range [r0, R_max] too small; increase R_max");

    for (int attempt = 0;; ++attempt) {
        if (attempt >= 10)
            throw std::runtime_error("build_zeta1: contraction bound violated after 10 attempts");
        const std::size_t m = n - i0;
        std::vector<double> phi(m, 1.0), inner_f(m), outer_f(m);
        double prev_diff = 0.0;
        bool contracted = true;
        int iters = 0;
        double diff = 0.0;
        const std::span<const double> r_sub = std::span<const double>(t.r).subspan(i0);
        std::vector<double> diff_history;
        for (iters = 1; iters <= 50; ++iters) {
            for (std::size_t j = 0; j < m; ++j) inner_f[j] = inner_ig[i0 + j] * phi[j];
            const TailEstimate te = fit_exponential_tail(r_sub, inner_f);
            auto inner = detail::suffix_trapezoid(t.r, inner_f, i0, te.value);
            for (std::size_t j = 0; j < m; ++j) outer_f[j] = t.inv_wm[i0 + j] * inner[j];
            const double outer_tail = fit_powerlaw_tail(r_sub, outer_f);
            auto outer = detail::suffix_trapezoid(t.r, outer_f, i0, outer_tail);
            diff = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                const double next = 1.0 + (d - 1) * outer[j];
                diff = std::max(diff, std::abs(next - phi[j]));
                phi[j] = next;
            }
            diff_history.push_back(diff);
            if (iters > 2 && prev_diff > 0 && diff > 0.55 * prev_diff && diff > fp_tol) {
                contracted = false;
                break;
            }
            prev_diff = diff;
            if (diff <= fp_tol) break;
        }
        if (!contracted) {
            // push r0 outward to where lambda halves and retry
            const double target = 0.5 * lambda[i0];
            std::size_t next_i0 = i0;
            while (next_i0 + 33 < n && lambda[next_i0] > target) ++next_i0;
            if (next_i0 == i0) ++next_i0;
            i0 = next_i0;
            continue;
        }
        pair.fixed_point_iterations += iters;
        pair.fixed_point_residual = std::max(pair.fixed_point_residual, diff);
        pair.r0 = t.r[i0];

        // final inner integral gives the analytic derivative
        for (std::size_t j = 0; j < m; ++j) inner_f[j] = inner_ig[i0 + j] * phi[j];
        const TailEstimate te = fit_exponential_tail(r_sub, inner_f);
        auto inner = detail::suffix_trapezoid(t.r, inner_f, i0, te.value);
        for (std::size_t j = 0; j < m; ++j) {
            pair.zeta1[i0 + j] = phi[j];
            pair.zeta1_prime[i0 + j] = (1.0 - d) * t.inv_wm[i0 + j] * inner[j];
        }
        break;
    }

    // continue below r0 by backward integration of the homogeneous equation
    if (i0 > 0) {
        std::vector<double> ts(t.r.begin(), t.r.begin() + i0 + 1);
        std::reverse(ts.begin(), ts.end());
        const auto rhs = detail::homogeneous_rhs(dc);
        const auto path =
            integrate_path<2>(rhs, {pair.zeta1[i0], pair.zeta1_prime[i0]}, ts, 1e-11);
        for (std::size_t j = 0; j <= i0; ++j) {
            pair.zeta1[i0 - j] = path[j][0];
            pair.zeta1_prime[i0 - j] = path[j][1];
        }
    }
}

// zeta2 = r * phi, phi the fixed point of
//   phi_{n+1}(r) = 1 + beta int_0^r mu^{1-d} rho^{-2} e^{beta G}
//                      [ int_0^rho e^{-beta G} mu^{d-1} g phi s ds ] drho
// on (0, r1] with Lambda(r1) <= 1/2, continued above r1 by forward
// integration of the phi equation
//   phi'' + (2/r + (d-1)/(r(1+eta^2)) - beta g) phi' - (beta g / r) phi = 0.
// Then zeta2(0) = 0, zeta2'(0) = 1.
inline void build_zeta2(const DerivedCoefficients& dc, const RadialGrid& grid,
                        const detail::CoeffTables& t, HomogeneousPair& pair,
                        double fp_tol = 1e-10) {
    const std::size_t n = grid.size();
    const int d = dc.dimension();
    const double beta = dc.beta();
    pair.zeta2.assign(n, 0.0);
    pair.zeta2_prime.assign(n, 0.0);

    // Lambda on the sub-unit part of the grid (kernel with |g|)
    std::size_t last_le_1 = 0;
    while (last_le_1 + 1 < n && t.r[last_le_1 + 1] <= 1.0) ++last_le_1;
    std::vector<double> inner_ig(last_le_1 + 1), outer_ig(last_le_1 + 1);
    for (std::size_t i = 0; i <= last_le_1; ++i)
        inner_ig[i] = t.wm[i] * std::abs(t.g[i]) * t.r[i];
    auto inner = detail::prefix_trapezoid(t.r, inner_ig, last_le_1);
    for (std::size_t i = 0; i <= last_le_1; ++i)
        outer_ig[i] = t.inv_wm[i] * inner[i] / (t.r[i] * t.r[i]);
    auto Lambda = detail::prefix_trapezoid(t.r, outer_ig, last_le_1);
    for (auto& v : Lambda) v *= beta;

    std::size_t i1 = last_le_1;
    while (i1 > 8 && Lambda[i1] > 0.5) --i1;
    if (Lambda[i1] > 0.5)
        throw std::runtime_error("build_zeta2: no r1 in (0,1] with Lambda(r1) <= 1/2");

    std::vector<double> phi_full(n, 1.0), phi_prime_full(n, 0.0);
    for (int attempt = 0;; ++attempt) {
        if (attempt >= 10)
            throw std::runtime_error("build_zeta2: contraction bound violated after 10 attempts");
        const std::size_t m = i1 + 1;
        std::vector<double> phi(m, 1.0), inner_f(m);
        double prev_diff = 0.0, diff = 0.0;
        bool contracted = true;
        int iters = 0;
        std::vector<double> inner_c;
        for (iters = 1; iters <= 50; ++iters) {
            for (std::size_t i = 0; i < m; ++i) inner_f[i] = t.wm[i] * t.g[i] * t.r[i] * phi[i];
            inner_c = detail::prefix_trapezoid(t.r, inner_f, i1);
            std::vector<double> outer_f(m);
            for (std::size_t i = 0; i < m; ++i)
                outer_f[i] = t.inv_wm[i] * inner_c[i] / (t.r[i] * t.r[i]);
            auto outer = detail::prefix_trapezoid(t.r, outer_f, i1);
            diff = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                const double next = 1.0 + beta * outer[i];
                diff = std::max(diff, std::abs(next - phi[i]));
                phi[i] = next;
            }
            if (iters > 2 && prev_diff > 0 && diff > 0.55 * prev_diff && diff > fp_tol) {
                contracted = false;
                break;
            }
            prev_diff = diff;
            if (diff <= fp_tol) break;
        }
        if (!contracted) {
            const double target = 0.5 * Lambda[i1];
            std::size_t next_i1 = i1;
            while (next_i1 > 8 && Lambda[next_i1] > target) --next_i1;
            if (next_i1 == i1) --next_i1;
            i1 = next_i1;
            continue;
        }
        pair.fixed_point_iterations += iters;
        pair.fixed_point_residual = std::max(pair.fixed_point_residual, diff);
        pair.r1 = t.r[i1];
        for (std::size_t i = 0; i < m; ++i) {
            phi_full[i] = phi[i];
            phi_prime_full[i] =
                beta * t.inv_wm[i] * inner_c[i] / (t.r[i] * t.r[i]);
        }
        break;
    }

    // continue phi above r1 by the forward initial-value problem
    {
        std::vector<double> ts(t.r.begin() + i1, t.r.end());
        const auto rhs = [&dc, beta, d](double r, const OdeState<2>& y) -> OdeState<2> {
            const double e = dc.spec().eta_at(r);
            const double inv1pe2 = 1.0 / (1.0 + e * e);
            const double g = dc.g(r);
            const double a = 2.0 / r + (d - 1) * inv1pe2 / r - beta * g;
            return {y[1], -a * y[1] + beta * g / r * y[0]};
        };
        const auto path =
            integrate_path<2>(rhs, {phi_full[i1], phi_prime_full[i1]}, ts, 1e-11);
        for (std::size_t j = 0; j < ts.size(); ++j) {
            phi_full[i1 + j] = path[j][0];
            phi_prime_full[i1 + j] = path[j][1];
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        pair.zeta2[i] = t.r[i] * phi_full[i];
        pair.zeta2_prime[i] = phi_full[i] + t.r[i] * phi_prime_full[i];
    }
}

// Fit a_beta from (zeta1 zeta2' - zeta1' zeta2) mu^{d-1} e^{-beta G}, which
// Abel's identity makes constant for a true solution pair. The relative
// spread across nodes is the consistency diagnostic.
inline double wronskian(HomogeneousPair& pair, const detail::CoeffTables& t) {
    const std::size_t n = pair.grid.size();
    std::vector<double> c;
    c.reserve(n);
    for (std::size_t i = 3; i + 3 < n; ++i) {
        const double w = pair.zeta1[i] * pair.zeta2_prime[i] - pair.zeta1_prime[i] * pair.zeta2[i];
        c.push_back(w * t.wm[i]);
    }
    std::vector<double> sorted = c;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double a = sorted[sorted.size() / 2];
    if (!(a > 0)) throw std::runtime_error("wronskian: fitted a_beta is not positive");
    double spread = 0.0;
    for (double v : c) spread = std::max(spread, std::abs(v - a) / a);
    pair.a_beta = a;
    pair.wronskian_spread = spread;
    if (spread > 0.01)
        throw std::runtime_error("wronskian: relative spread " + std::to_string(spread) +
                                 " exceeds 1% (zeta pair is not a consistent solution pair)");
    return a;
}

inline HomogeneousPair build_homogeneous_pair(const DerivedCoefficients& dc, const RadialGrid& grid,
                                              double fp_tol = 1e-10) {
    grid.validate();
    const auto t = detail::tabulate_coeffs(dc, grid);
    HomogeneousPair pair;
    pair.grid = grid;
    build_zeta1(dc, grid, t, pair, fp_tol);
    build_zeta2(dc, grid, t, pair, fp_tol);
    wronskian(pair, t);
    return pair;
}

namespace detail {

// FD residual of the psi equation; sup over [2 r_min, R_max/2].
inline void fill_residual(const DerivedCoefficients& dc, const RadialGrid& grid,
                          const CoeffTables& t, PsiSolution& sol) {
    const std::size_t n = grid.size();
    const int d = dc.dimension();
    const double beta = dc.beta();
    const auto psi_dd = fd_derivative(grid, sol.psi_prime);
    sol.residual.assign(n, 0.0);
    sol.residual_sup = 0.0;
    const double lo = 2.0 * grid.r_min();
    const double hi = 0.5 * grid.r_max();
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double r = t.r[i];
        const double res = psi_dd[i] -
                           (beta * t.g[i] - (d - 1) * t.inv1pe2[i] / r) * sol.psi_prime[i] -
                           (d - 1) * t.inv1pe2[i] / (r * r) * sol.psi[i] + beta * t.h[i];
        sol.residual[i] = res;
        if (r >= lo && r <= hi) sol.residual_sup = std::max(sol.residual_sup, std::abs(res));
    }
}

}  // namespace detail

// Psi(k)(r) = zeta1(r) int_0^r zeta2 w^{-1} k + zeta2(r) int_r^inf zeta1 w^{-1} k,
// the particular solution of the psi equation with source k in place of
// beta h; Psi(k)(0) = 0. The derivative uses the same integrals with the
// zeta derivatives.
inline PsiSolution apply_Psi(const HomogeneousPair& pair, const DerivedCoefficients& dc,
                             const RadialFn& k) {
    const RadialGrid& grid = pair.grid;
    const std::size_t n = grid.size();
    const auto t = detail::tabulate_coeffs(dc, grid);

    std::vector<double> f2(n), f1(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double kv = k(grid.nodes[i]);
        const double winv = t.wm[i] / pair.a_beta;
        f2[i] = pair.zeta2[i] * winv * kv;
        f1[i] = pair.zeta1[i] * winv * kv;
    }
    auto I2 = cumulative_from_zero(grid, f2, 0.0);
    TailEstimate tail;
    auto I1 = cumulative_to_infinity(grid, f1, &tail);
    if (!tail.ok && std::abs(f1[n - 1]) > 0)
        throw std::runtime_error("apply_Psi: tail integral not convergent (source grows too fast)");

    PsiSolution sol;
    sol.grid = grid;
    sol.method = PsiMethod::general_Psi;
    sol.psi.resize(n);
    sol.psi_prime.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        sol.psi[i] = pair.zeta1[i] * I2[i] + pair.zeta2[i] * I1[i];
        sol.psi_prime[i] = pair.zeta1_prime[i] * I2[i] + pair.zeta2_prime[i] * I1[i];
    }
    sol.tail_truncation = tail.value;
    detail::fill_residual(dc, grid, t, sol);
    return sol;
}

// d = 1 closed form. The inner improper integral is tabulated once on the
// grid and reused; psi'(r) = beta e^{beta G(r)} int_r^inf e^{-beta G} h.
inline PsiSolution solve_psi_d1(const DerivedCoefficients& dc, const RadialGrid& grid) {
    if (dc.dimension() != 1)
        throw std::invalid_argument("solve_psi_d1: model dimension must be 1");
    grid.validate();
    const std::size_t n = grid.size();
    const double beta = dc.beta();
    const auto t = detail::tabulate_coeffs(dc, grid);

    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = std::exp(-beta * t.G[i]) * t.h[i];
    TailEstimate tail;
    auto Q = cumulative_to_infinity(grid, y, &tail);
    if (!tail.ok && std::abs(y[n - 1]) > 0)
        throw std::runtime_error(
            "solve_psi_d1: inner integral int e^{-beta G} h not convergent (hypotheses violated)");

    PsiSolution sol;
    sol.grid = grid;
    sol.method = PsiMethod::d1_closed_form;
    sol.psi_prime.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        sol.psi_prime[i] = beta * std::exp(beta * t.G[i]) * Q[i];
    sol.psi = cumulative_from_zero(grid, sol.psi_prime, beta * Q[0]);
    sol.tail_truncation = tail.value;
    detail::fill_residual(dc, grid, t, sol);
    return sol;
}

// psi = beta Psi(h) through the zeta1/zeta2 construction; works for any d,
// and for d = 1 cross-validates the closed form.
inline PsiSolution solve_psi_general(const DerivedCoefficients& dc, const RadialGrid& grid,
                                     double fp_tol = 1e-10) {
    const auto pair = build_homogeneous_pair(dc, grid, fp_tol);
    const double beta = dc.beta();
    PsiSolution sol = apply_Psi(pair, dc, [&dc, beta](double r) { return beta * dc.h(r); });

    // Prop.-1 comparison bound: 0 <= f <= b forces 0 <= psi <= Id.
    bool f_le_b = true;
    for (std::size_t i = 0; i < grid.size(); i += 16) {
        const double r = grid.nodes[i];
        const double fv = dc.spec().f_at(r);
        if (fv < 0 || fv > dc.spec().b_at(r) * (1.0 + 1e-12)) {
            f_le_b = false;
            break;
        }
    }
    if (f_le_b) {
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double r = grid.nodes[i];
            if (sol.psi[i] < -1e-6 - 1e-4 * r || sol.psi[i] > r * (1.0 + 1e-4) + 1e-6)
                throw std::runtime_error("solve_psi_general: 0 <= psi <= Id violated at r = " +
                                         std::to_string(r) + " (psi = " +
                                         std::to_string(sol.psi[i]) + ")");
        }
    }
    return sol;
}

}  // namespace reldiff
