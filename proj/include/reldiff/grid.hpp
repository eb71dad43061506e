#pragma once

// Radial tabulation grids and the composite integration / interpolation
// helpers shared by the psi construction.
//
// The standard grid is geometric on [1e-4, 1] and uniform on [1, R_max],
// with the uniform spacing tied to beta so that the trapezoid error of the
// e^{+-beta G}-weighted cumulative integrals stays a comfortable margin
// below the 1e-4 targets of the identity and residual checks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace reldiff {

struct RadialGrid {
    std::vector<double> nodes;  // strictly increasing, nodes.front() <= 1e-3

    double r_min() const { return nodes.front(); }
    double r_max() const { return nodes.back(); }
    std::size_t size() const { return nodes.size(); }

    void validate() const {
        if (nodes.size() < 200) throw std::invalid_argument("RadialGrid: need at least 200 nodes");
        if (!(nodes.front() > 0) || nodes.front() > 1e-3)
            throw std::invalid_argument("RadialGrid: first node must lie in (0, 1e-3]");
        for (std::size_t i = 1; i < nodes.size(); ++i)
            if (!(nodes[i] > nodes[i - 1]))
                throw std::invalid_argument("RadialGrid: nodes must be strictly increasing");
    }

    // Index of the last node <= r (r within [r_min, r_max]).
    std::size_t cell_of(double r) const {
        auto it = std::upper_bound(nodes.begin(), nodes.end(), r);
        std::size_t i = static_cast<std::size_t>(it - nodes.begin());
        if (i == 0) return 0;
        if (i >= nodes.size()) return nodes.size() - 2;
        return i - 1;
    }
};

// Default truncation radius: the larger of 40/beta and 40/(beta*eps),
// clamped to [20, 200]. Tail contributions beyond it carry the e^{-beta eps r/2}
// envelope and are folded into error reports.
inline double default_r_max(double beta, double epsilon) {
    const double r = std::max(40.0 / beta, 40.0 / (beta * epsilon));
    return std::clamp(r, 20.0, 200.0);
}

inline RadialGrid make_standard_grid(double beta, double epsilon,
                                     std::size_t n_log = 4096, double h_uniform = 0.0,
                                     double r_max_override = 0.0) {
    const double r_min = 1e-4;
    const double r_knee = 1.0;
    const double R = r_max_override > 0 ? r_max_override : default_r_max(beta, epsilon);
    if (h_uniform <= 0) h_uniform = std::min(0.02, 6e-3 / std::max(beta, 0.05));

    RadialGrid g;
    g.nodes.reserve(n_log + static_cast<std::size_t>((R - r_knee) / h_uniform) + 2);
    const double dlog = std::log(r_knee / r_min) / static_cast<double>(n_log);
    for (std::size_t i = 0; i < n_log; ++i) g.nodes.push_back(r_min * std::exp(dlog * i));
    const std::size_t n_u = static_cast<std::size_t>(std::ceil((R - r_knee) / h_uniform));
    for (std::size_t i = 0; i <= n_u; ++i)
        g.nodes.push_back(r_knee + (R - r_knee) * static_cast<double>(i) / n_u);
    g.nodes.back() = R;
    g.validate();
    return g;
}

// ---- composite integration over tabulated values ----

// Prefix integrals C[i] = int_0^{r_i} of the piecewise-linear interpolant,
// with f extended linearly to (0, value_at_zero) on the leading cell.
inline std::vector<double> cumulative_from_zero(const RadialGrid& g, std::span<const double> f,
                                                double value_at_zero) {
    std::vector<double> c(g.size());
    c[0] = 0.5 * (value_at_zero + f[0]) * g.nodes[0];
    for (std::size_t i = 1; i < g.size(); ++i)
        c[i] = c[i - 1] + 0.5 * (f[i] + f[i - 1]) * (g.nodes[i] - g.nodes[i - 1]);
    return c;
}

struct TailEstimate {
    double value = 0.0;  // estimated int_{R_max}^inf f
    double rate = 0.0;   // fitted exponential decay rate at the cut
    bool ok = false;     // false when f does not look exponentially decaying
};

// Fit the local decay rate lambda = -d(log f)/dr from the last nodes and
// estimate the dropped tail as f(R)/lambda. Exact for a pure exponential.
inline TailEstimate fit_exponential_tail(std::span<const double> r, std::span<const double> f) {
    TailEstimate t;
    const std::size_t n = r.size();
    const std::size_t k = std::min<std::size_t>(8, n - 1);
    const double f_end = f[n - 1];
    const double f_ref = f[n - 1 - k];
    if (!(f_end > 0) || !(f_ref > 0) || !std::isfinite(f_end) || !std::isfinite(f_ref)) {
        // Vanishing tail values: nothing to add.
        t.ok = (f_end == 0.0);
        return t;
    }
    const double dr = r[n - 1] - r[n - 1 - k];
    t.rate = std::log(f_ref / f_end) / dr;
    if (t.rate > 0) {
        t.value = f_end / t.rate;
        t.ok = true;
    }
    return t;
}

inline TailEstimate fit_exponential_tail(const RadialGrid& g, std::span<const double> f) {
    return fit_exponential_tail(std::span<const double>(g.nodes), f);
}

// Power-law analogue for integrands falling like r^{-p}, p > 1.
inline double fit_powerlaw_tail(std::span<const double> r, std::span<const double> f) {
    const std::size_t n = r.size();
    const std::size_t k = std::min<std::size_t>(8, n - 1);
    const double f_end = f[n - 1], f_ref = f[n - 1 - k];
    if (!(f_end > 0) || !(f_ref > 0)) return 0.0;
    const double p = std::log(f_ref / f_end) / std::log(r[n - 1] / r[n - 1 - k]);
    if (!(p > 1.2)) return 0.0;
    return f_end * r[n - 1] / (p - 1.0);
}

// Suffix integrals S[i] = int_{r_i}^inf of the piecewise-linear interpolant
// plus the fitted exponential tail beyond R_max.
inline std::vector<double> cumulative_to_infinity(const RadialGrid& g, std::span<const double> f,
                                                  TailEstimate* tail_out = nullptr) {
    const TailEstimate t = fit_exponential_tail(g, f);
    if (tail_out) *tail_out = t;
    std::vector<double> s(g.size());
    s[g.size() - 1] = t.value;
    for (std::size_t i = g.size() - 1; i-- > 0;)
        s[i] = s[i + 1] + 0.5 * (f[i] + f[i + 1]) * (g.nodes[i + 1] - g.nodes[i]);
    return s;
}

// ---- interpolation ----

inline double linear_interp(const RadialGrid& g, std::span<const double> f, double r) {
    if (r <= g.r_min()) return f[0];
    if (r >= g.r_max()) return f[g.size() - 1];
    const std::size_t i = g.cell_of(r);
    const double w = (r - g.nodes[i]) / (g.nodes[i + 1] - g.nodes[i]);
    return (1.0 - w) * f[i] + w * f[i + 1];
}

// Cubic Hermite using tabulated values and derivatives.
inline double hermite_interp(std::span<const double> nodes, std::span<const double> f,
                             std::span<const double> df, double r) {
    if (r <= nodes.front()) return f[0];
    if (r >= nodes.back()) return f[nodes.size() - 1];
    auto it = std::upper_bound(nodes.begin(), nodes.end(), r);
    const std::size_t i = static_cast<std::size_t>(it - nodes.begin()) - 1;
    const double h = nodes[i + 1] - nodes[i];
    const double t = (r - nodes[i]) / h;
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * f[i] + (t3 - 2 * t2 + t) * h * df[i] +
           (-2 * t3 + 3 * t2) * f[i + 1] + (t3 - t2) * h * df[i + 1];
}

inline double hermite_interp(const RadialGrid& g, std::span<const double> f,
                             std::span<const double> df, double r) {
    return hermite_interp(std::span<const double>(g.nodes), f, df, r);
}

// Second-order first derivative on a non-uniform grid (interior nodes only;
// endpoints get one-sided values and should not feed diagnostics).
inline std::vector<double> fd_derivative(const RadialGrid& g, std::span<const double> f) {
    const std::size_t n = g.size();
    std::vector<double> d(n);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double hm = g.nodes[i] - g.nodes[i - 1];
        const double hp = g.nodes[i + 1] - g.nodes[i];
        d[i] = (hm * hm * f[i + 1] + (hp * hp - hm * hm) * f[i] - hp * hp * f[i - 1]) /
               (hm * hp * (hm + hp));
    }
    d[0] = (f[1] - f[0]) / (g.nodes[1] - g.nodes[0]);
    d[n - 1] = (f[n - 1] - f[n - 2]) / (g.nodes[n - 1] - g.nodes[n - 2]);
    return d;
}

}  // namespace reldiff
