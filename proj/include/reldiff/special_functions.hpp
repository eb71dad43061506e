#pragma once

// Exponential integral E1 and the standard normal CDF.

#include <cmath>
#include <limits>
#include <stdexcept>

namespace reldiff {

namespace detail {

inline constexpr double kEulerGamma = 0.5772156649015328606;
// Series/continued-fraction crossover; both expansions are well conditioned
// in a band around it (tested to 1e-12 agreement on [1.0, 2.0]).
inline constexpr double kE1Switch = 1.5;

// Power series E1(x) = -gamma - ln x + sum_{k>=1} (-1)^{k+1} x^k / (k * k!).
inline double e1_series(double x) {
    double sum = 0.0;
    double term = 1.0;  // x^k / k!
    for (int k = 1; k <= 60; ++k) {
        term *= x / k;
        const double add = (k % 2 ? term : -term) / k;
        sum += add;
        if (std::abs(add) < 1e-18 * (std::abs(sum) + 1.0)) break;
    }
    return -kEulerGamma - std::log(x) + sum;
}

// Continued fraction, modified Lentz:
//   e^x E1(x) = 1/(x+1- 1^2/(x+3- 2^2/(x+5- ...)))
inline double e1_cf_scaled(double x) {
    const double tiny = 1e-300;
    double b = x + 1.0;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 200; ++i) {
        const double a = -static_cast<double>(i) * i;
        b += 2.0;
        d = a * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + a / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-16) break;
    }
    return h;
}

}  // namespace detail

// E1(x) = int_x^inf e^{-u}/u du, x > 0.
inline double expint_e1(double x) {
    if (!(x > 0)) throw std::invalid_argument("expint_e1: requires x > 0");
    if (x <= detail::kE1Switch) return detail::e1_series(x);
    return std::exp(-x) * detail::e1_cf_scaled(x);
}

// e^x E1(x); safe for large x where E1 alone underflows.
inline double expint_e1_scaled(double x) {
    if (!(x > 0)) throw std::invalid_argument("expint_e1_scaled: requires x > 0");
    if (x <= detail::kE1Switch) return std::exp(x) * detail::e1_series(x);
    return detail::e1_cf_scaled(x);
}

inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

}  // namespace reldiff
