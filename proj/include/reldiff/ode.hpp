#pragma once

// Embedded Dormand-Prince 5(4) with PI step control, for the small linear
// systems behind the homogeneous-solution continuations and the I-integral
// tabulation. Integrates through a caller-supplied list of output points,
// in either direction.

#include <array>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace reldiff {

template <std::size_t N>
using OdeState = std::array<double, N>;

template <std::size_t N>
using OdeRhs = std::function<OdeState<N>(double, const OdeState<N>&)>;

namespace detail {

template <std::size_t N>
OdeState<N> axpy(const OdeState<N>& y, double a, const OdeState<N>& k) {
    OdeState<N> r;
    for (std::size_t i = 0; i < N; ++i) r[i] = y[i] + a * k[i];
    return r;
}

}  // namespace detail

// One adaptive DP54 step attempt (classic Butcher tableau). Returns the
// 5th-order solution and the embedded error-estimate norm.
template <std::size_t N>
struct Dp54Step {
    OdeState<N> y5;
    double err_norm;
};

template <std::size_t N>
Dp54Step<N> dp54_step(const OdeRhs<N>& rhs, double t, const OdeState<N>& y, double h,
                      double atol, double rtol) {
    using S = OdeState<N>;
    const S k1 = rhs(t, y);
    const S k2 = rhs(t + h / 5., detail::axpy(y, h / 5., k1));
    S tmp = y;
    for (std::size_t i = 0; i < N; ++i) tmp[i] += h * (3. / 40 * k1[i] + 9. / 40 * k2[i]);
    const S k3 = rhs(t + 3. * h / 10, tmp);
    tmp = y;
    for (std::size_t i = 0; i < N; ++i)
        tmp[i] += h * (44. / 45 * k1[i] - 56. / 15 * k2[i] + 32. / 9 * k3[i]);
    const S k4 = rhs(t + 4. * h / 5, tmp);
    tmp = y;
    for (std::size_t i = 0; i < N; ++i)
        tmp[i] += h * (19372. / 6561 * k1[i] - 25360. / 2187 * k2[i] + 64448. / 6561 * k3[i] -
                       212. / 729 * k4[i]);
    const S k5 = rhs(t + 8. * h / 9, tmp);
    tmp = y;
    for (std::size_t i = 0; i < N; ++i)
        tmp[i] += h * (9017. / 3168 * k1[i] - 355. / 33 * k2[i] + 46732. / 5247 * k3[i] +
                       49. / 176 * k4[i] - 5103. / 18656 * k5[i]);
    const S k6 = rhs(t + h, tmp);

    Dp54Step<N> out;
    for (std::size_t i = 0; i < N; ++i)
        out.y5[i] = y[i] + h * (35. / 384 * k1[i] + 500. / 1113 * k3[i] + 125. / 192 * k4[i] -
                                2187. / 6784 * k5[i] + 11. / 84 * k6[i]);
    const S k7 = rhs(t + h, out.y5);

    double err = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const double y4 = y[i] + h * (5179. / 57600 * k1[i] + 7571. / 16695 * k3[i] +
                                      393. / 640 * k4[i] - 92097. / 339200 * k5[i] +
                                      187. / 2100 * k6[i] + 1. / 40 * k7[i]);
        const double sc = atol + rtol * std::max(std::abs(y[i]), std::abs(out.y5[i]));
        const double e = (out.y5[i] - y4) / sc;
        err += e * e;
    }
    out.err_norm = std::sqrt(err / N);
    return out;
}

// Integrate from (ts.front(), y0) through every point of ts (strictly
// monotone, increasing or decreasing); returns the state at each ts[i].
template <std::size_t N>
std::vector<OdeState<N>> integrate_path(const OdeRhs<N>& rhs, const OdeState<N>& y0,
                                        std::span<const double> ts, double rtol = 1e-11,
                                        double atol = 1e-300) {
    if (ts.size() < 2) throw std::invalid_argument("integrate_path: need at least two points");
    const double dir = ts[1] > ts[0] ? 1.0 : -1.0;

    std::vector<OdeState<N>> out;
    out.reserve(ts.size());
    out.push_back(y0);

    OdeState<N> y = y0;
    double t = ts[0];
    double h = dir * std::max(1e-8, std::abs(ts[1] - ts[0])) * 0.5;

    for (std::size_t seg = 1; seg < ts.size(); ++seg) {
        const double t_end = ts[seg];
        while (dir * (t_end - t) > 0) {
            if (dir * (t + h - t_end) > 0) h = t_end - t;
            const auto step = dp54_step<N>(rhs, t, y, h, atol, rtol);
            if (step.err_norm <= 1.0) {
                t += h;
                y = step.y5;
            }
            const double fac =
                std::clamp(0.9 * std::pow(std::max(step.err_norm, 1e-10), -0.2), 0.2, 5.0);
            h *= fac;
            if (!(std::abs(h) > std::abs(t) * 1e-15 + 1e-300))
                throw std::runtime_error("integrate_path: step size underflow (stiff or singular)");
        }
        t = t_end;
        out.push_back(y);
    }
    return out;
}

}  // namespace reldiff
