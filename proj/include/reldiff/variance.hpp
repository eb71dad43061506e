#pragma once

// The limiting per-coordinate variance rate Sigma_beta^2, by three routes:
//
//  prop2:   Sigma^2 = [ d int_0^inf e^{-beta G} mu^{d-1} sigma^{-2} ]^{-1}
//                     * int_0^inf psi e^{-beta G} mu^{d-1} h
//
//  lemma2:  Sigma^2 = (beta d)^{-1} [ pi(sigma^2 |psi'|^2)
//                     + (d-1) pi(sigma^2 psi^2 / ((1+eta^2) r^2)) ]
//           with pi(F) = int F nu / z_nu; note sigma^2 nu = mu^{d-1} e^{-beta G}.
//
//  dh_d1:   the Dunkel-Haenggi d=1 special case
//           Sigma^2 = K_beta / J_beta,
//           J = int_0^inf e^{beta(1-sqrt(1+z^2))} / sqrt(1+z^2) dz,
//           K = 2 beta int_0^inf I(x)^2 e^{beta(sqrt(1+x^2)-1)} dx,
//           I(x) = int_x^inf y e^{beta(1-sqrt(1+y^2))} / (1+y^2) dy.
//
// The two general routes are linked by an integration by parts and must
// agree; dh_d1 is an independent check that never touches the psi solver.
// Small/large-beta asymptotics and the small-beta constant
// A = int_0^inf E1(x)^2 e^x dx round out the module.

#include <cmath>
#include <mutex>
#include <string>
#include <vector>

#include "reldiff/model.hpp"
#include "reldiff/ode.hpp"
#include "reldiff/psi.hpp"
#include "reldiff/quadrature.hpp"
#include "reldiff/special_functions.hpp"

namespace reldiff {

enum class VarianceMethod {
    prop2,
    lemma2,
    dh_d1,
    asymptotic_large_beta,
    asymptotic_small_beta,
};

inline const char* to_string(VarianceMethod m) {
    switch (m) {
        case VarianceMethod::prop2: return "prop2";
        case VarianceMethod::lemma2: return "lemma2";
        case VarianceMethod::dh_d1: return "dh_d1";
        case VarianceMethod::asymptotic_large_beta: return "asymptotic_large_beta";
        case VarianceMethod::asymptotic_small_beta: return "asymptotic_small_beta";
    }
    return "?";
}

struct VarianceResult {
    double sigma2 = 0.0;
    VarianceMethod method = VarianceMethod::prop2;
    double error_estimate = 0.0;
    double beta = 0.0;
    int d = 1;
};

namespace detail {

// int_0^{R} fn + exponential tail estimate beyond R folded into the error.
template <typename F>
IntegralValue integrate_with_tail(const F& fn, double R, double rate_hint,
                                  const QuadratureConfig& cfg) {
    IntegralValue v = integrate(fn, 0.0, R, cfg);
    const double f_end = std::abs(fn(R));
    if (f_end > 0 && rate_hint > 0) v.error_estimate += f_end / rate_hint;
    v.truncated_at = R;
    return v;
}

}  // namespace detail

inline VarianceResult sigma2_prop2(const DerivedCoefficients& dc, const PsiSolution& psi) {
    const int d = dc.dimension();
    const double beta = dc.beta();
    const double R = psi.grid.r_max();
    const QuadratureConfig& cfg = dc.quad_config();
    const double rate = beta * dc.g(R) * 0.5;

    auto num_fn = [&](double r) {
        if (!(r > 0)) return 0.0;
        return psi.value(r) * std::exp(-beta * dc.G(r)) * std::pow(dc.mu(r), d - 1) * dc.h(r);
    };
    auto den_fn = [&](double r) {
        if (!(r > 0)) return 0.0;
        const double s = dc.spec().sigma_at(r);
        return std::exp(-beta * dc.G(r)) * std::pow(dc.mu(r), d - 1) / (s * s);
    };
    const IntegralValue num = detail::integrate_with_tail(num_fn, R, rate, cfg);
    const IntegralValue den = detail::integrate_with_tail(den_fn, R, rate, cfg);
    if (!den.converged || !(den.value > 0))
        throw std::runtime_error("sigma2_prop2: denominator integral not convergent");

    VarianceResult out;
    out.method = VarianceMethod::prop2;
    out.beta = beta;
    out.d = d;
    out.sigma2 = num.value / (d * den.value);
    out.error_estimate = num.error_estimate / (d * den.value) +
                         std::abs(out.sigma2) * (den.error_estimate / den.value + psi.residual_sup);
    if (out.sigma2 < 0 && out.sigma2 > -1e-12) out.sigma2 = 0.0;
    return out;
}

inline VarianceResult sigma2_lemma2(const DerivedCoefficients& dc, const PsiSolution& psi) {
    const int d = dc.dimension();
    const double beta = dc.beta();
    const double R = psi.grid.r_max();
    const double r_min = psi.grid.r_min();
    const QuadratureConfig& cfg = dc.quad_config();
    const double rate = beta * dc.g(R) * 0.5;

    auto weight = [&](double r) { return std::exp(-beta * dc.G(r)) * std::pow(dc.mu(r), d - 1); };
    auto t1_fn = [&](double r) {
        if (!(r > 0)) return 0.0;
        const double dp = psi.derivative(r);
        return dp * dp * weight(r);
    };
    auto t2_fn = [&](double r) {
        if (!(r > 0)) return 0.0;
        // psi/r stays finite at 0 since psi(0) = 0 and the table extends
        // linearly below its first node
        const double ratio = (r < r_min) ? psi.psi[0] / r_min : psi.value(r) / r;
        const double e = dc.spec().eta_at(r);
        return ratio * ratio / (1.0 + e * e) * weight(r);
    };

    const IntegralValue t1 = detail::integrate_with_tail(t1_fn, R, rate, cfg);
    IntegralValue t2;
    if (d > 1) t2 = detail::integrate_with_tail(t2_fn, R, rate, cfg);

    VarianceResult out;
    out.method = VarianceMethod::lemma2;
    out.beta = beta;
    out.d = d;
    const double z = dc.z_nu();
    out.sigma2 = (t1.value + (d - 1) * t2.value) / (beta * d * z);
    out.error_estimate = (t1.error_estimate + (d - 1) * t2.error_estimate) / (beta * d * z) +
                         std::abs(out.sigma2) * psi.residual_sup;
    return out;
}

// The DH d=1 integrals. The inner integral is carried in the scaled form
// Itilde(x) = I(x) e^{beta G(x)}, which satisfies
//     Itilde' = beta g(x) Itilde - h(x),   g = x/sqrt(1+x^2), h = x/(1+x^2),
// and equals e^{beta} e^{-beta G} E1(beta sqrt(1+x^2)) analytically; the
// scaled form keeps every stored quantity O(1/beta) at any beta. It is
// tabulated once by integrating the ODE backward from the truncation radius,
// seeded with the E1 tail value, instead of re-quadrating per x.
inline VarianceResult sigma2_dh_d1(double beta, QuadratureConfig cfg = {}) {
    if (!(beta > 0)) throw std::invalid_argument("sigma2_dh_d1: beta must be positive");
    cfg.validate();

    const double X = cfg.truncation_radius(beta, 0.0) + 10.0;
    const std::size_t n_tab = 4096;
    std::vector<double> xs(n_tab), itab(n_tab), dtab(n_tab);
    const double du = std::log1p(X) / (n_tab - 1);
    for (std::size_t i = 0; i < n_tab; ++i) xs[i] = std::expm1(du * i);
    xs.back() = X;

    auto g = [](double x) { return x / std::sqrt(1.0 + x * x); };
    auto h = [](double x) { return x / (1.0 + x * x); };
    const OdeRhs<1> rhs = [&](double x, const OdeState<1>& y) -> OdeState<1> {
        return {beta * g(x) * y[0] - h(x)};
    };
    {
        // Seed: I(X) = e^{beta} E1(z) with z = beta sqrt(1+X^2), so
        // Itilde(X) = I(X) e^{beta G(X)} = e^{z} E1(z) exactly.
        std::vector<double> ts(xs.rbegin(), xs.rend());
        const double z_end = beta * std::sqrt(1.0 + X * X);
        const auto path = integrate_path<1>(rhs, {expint_e1_scaled(z_end)}, ts, 1e-12);
        for (std::size_t i = 0; i < n_tab; ++i) itab[i] = path[n_tab - 1 - i][0];
    }
    for (std::size_t i = 0; i < n_tab; ++i)
        dtab[i] = beta * g(xs[i]) * itab[i] - h(xs[i]);

    auto G = [](double x) { return std::sqrt(1.0 + x * x) - 1.0; };
    auto itilde = [&](double x) { return hermite_interp(xs, itab, dtab, x); };

    const IntegralValue J = integrate_to_infinity(
        [&](double z) { return std::exp(-beta * G(z)) / std::sqrt(1.0 + z * z); }, 0.0, beta, cfg);
    auto k_fn = [&](double x) {
        const double it = itilde(x);
        return 2.0 * beta * it * it * std::exp(-beta * G(x));
    };
    IntegralValue K = detail::integrate_with_tail(k_fn, X, beta, cfg);

    VarianceResult out;
    out.method = VarianceMethod::dh_d1;
    out.beta = beta;
    out.d = 1;
    out.sigma2 = K.value / J.value;
    out.error_estimate = K.error_estimate / J.value +
                         std::abs(out.sigma2) * J.error_estimate / std::abs(J.value);
    return out;
}

// A = int_0^inf E1(x)^2 e^x dx, the small-beta limit constant. The integrand
// behaves like (gamma + log x)^2 near 0 and like e^{-x}/x^2 at infinity, so
// truncation at 50 is already below 1e-20. Deterministic and cached.
inline double constant_A() {
    static double value = 0.0;
    static std::once_flag flag;
    std::call_once(flag, [] {
        QuadratureConfig cfg;
        cfg.abs_tol = 1e-13;
        cfg.rel_tol = 1e-12;
        cfg.max_depth = 48;
        value = integrate([](double x) { return x > 0 ? expint_e1(x) * expint_e1(x) * std::exp(x) : 0.0; },
                          0.0, 50.0, cfg)
                    .value;
    });
    return value;
}

enum class AsymptoticRegime { large, small };

inline VarianceResult sigma2_asymptotic(double beta, AsymptoticRegime regime) {
    if (!(beta > 0)) throw std::invalid_argument("sigma2_asymptotic: beta must be positive");
    VarianceResult out;
    out.beta = beta;
    out.d = 1;
    if (regime == AsymptoticRegime::large) {
        out.method = VarianceMethod::asymptotic_large_beta;
        out.sigma2 = 2.0 / beta;
        out.error_estimate = out.sigma2 / beta;  // next-order correction scale
    } else {
        if (beta >= 1.0)
            throw std::invalid_argument(
                "sigma2_asymptotic: small-beta regime requires beta < 1 (log(1/beta) > 0)");
        out.method = VarianceMethod::asymptotic_small_beta;
        const double L = std::log(1.0 / beta);
        out.sigma2 = constant_A() / L;
        out.error_estimate = out.sigma2 / L;
    }
    return out;
}

}  // namespace reldiff
