#pragma once

// Histogram and moment/normality helpers for the Monte Carlo side.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "reldiff/special_functions.hpp"

namespace reldiff {

// Fixed-width histogram on [lo, hi); samples outside are clamped into the
// edge bins so that counts always sum to the number of samples taken.
struct Histogram {
    double lo = 0.0, hi = 1.0;
    std::vector<std::int64_t> counts;

    Histogram() = default;
    Histogram(double lo_, double hi_, std::size_t bins) : lo(lo_), hi(hi_), counts(bins, 0) {
        if (!(hi > lo) || bins == 0) throw std::invalid_argument("Histogram: bad range or bin count");
    }

    void add(double x) {
        const double w = (x - lo) / (hi - lo) * static_cast<double>(counts.size());
        std::int64_t i = static_cast<std::int64_t>(std::floor(w));
        i = std::clamp<std::int64_t>(i, 0, static_cast<std::int64_t>(counts.size()) - 1);
        ++counts[static_cast<std::size_t>(i)];
    }

    void merge(const Histogram& other) {
        for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
    }

    std::int64_t total() const {
        std::int64_t t = 0;
        for (auto c : counts) t += c;
        return t;
    }

    double bin_width() const { return (hi - lo) / static_cast<double>(counts.size()); }
    double bin_center(std::size_t i) const { return lo + (i + 0.5) * bin_width(); }
    std::vector<double> edges() const {
        std::vector<double> e(counts.size() + 1);
        for (std::size_t i = 0; i <= counts.size(); ++i) e[i] = lo + i * bin_width();
        return e;
    }
    // empirical density of bin i
    double density(std::size_t i) const {
        const std::int64_t t = total();
        return t == 0 ? 0.0 : static_cast<double>(counts[i]) / (t * bin_width());
    }
};

struct MomentStats {
    double mean = 0.0;
    double variance = 0.0;  // unbiased
    double skewness = 0.0;
    double excess_kurtosis = 0.0;
};

inline MomentStats compute_moments(std::span<const double> xs) {
    const std::size_t n = xs.size();
    if (n < 2) throw std::invalid_argument("compute_moments: need at least 2 samples");
    MomentStats m;
    for (double x : xs) m.mean += x;
    m.mean /= static_cast<double>(n);
    double m2 = 0, m3 = 0, m4 = 0;
    for (double x : xs) {
        const double d = x - m.mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    m.variance = m2 * static_cast<double>(n) / (n - 1);
    if (m2 > 0) {
        m.skewness = m3 / std::pow(m2, 1.5);
        m.excess_kurtosis = m4 / (m2 * m2) - 3.0;
    } else {
        m.skewness = 0.0;
        m.excess_kurtosis = -3.0;
    }
    return m;
}

// Kolmogorov-Smirnov sup-distance of the empirical CDF to a reference CDF.
template <typename Cdf>
double ks_distance(std::vector<double> samples, const Cdf& cdf) {
    if (samples.empty()) throw std::invalid_argument("ks_distance: no samples");
    std::sort(samples.begin(), samples.end());
    const double n_inv = 1.0 / static_cast<double>(samples.size());
    double sup = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double F = cdf(samples[i]);
        sup = std::max(sup, std::abs((i + 1) * n_inv - F));
        sup = std::max(sup, std::abs(i * n_inv - F));
    }
    return sup;
}

inline double sample_correlation(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2)
        throw std::invalid_argument("sample_correlation: size mismatch");
    const std::size_t n = a.size();
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

}  // namespace reldiff
