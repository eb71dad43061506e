#pragma once

// Counter-based pseudo-random streams: output i of stream s under seed k is
// mix(key(k, s) + i * gamma), the SplitMix64 sequence evaluated at an
// arbitrary position. (seed, stream, counter) fully determines every draw,
// so trajectory results cannot depend on thread scheduling.

#include <cmath>
#include <cstdint>

namespace reldiff {

inline std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

inline std::uint64_t derive_stream_key(std::uint64_t seed, std::uint64_t stream) {
    return mix64(seed ^ mix64((stream + 1) * kGolden));
}

class RngStream {
  public:
    RngStream(std::uint64_t seed, std::uint64_t stream)
        : key_(derive_stream_key(seed, stream)) {}

    std::uint64_t next_u64() { return mix64(key_ + (++counter_) * kGolden); }

    // uniform on (0, 1]
    double next_unit() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    // standard normal via Box-Muller; draws exactly two uniforms per pair,
    // keeping the counter advance deterministic
    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = next_unit();
        const double u2 = next_unit();
        const double rad = std::sqrt(-2.0 * std::log(u1));
        const double ang = 6.283185307179586476925286766559 * u2;
        spare_ = rad * std::sin(ang);
        have_spare_ = true;
        return rad * std::cos(ang);
    }

  private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    return mix64(seed + mix64((index + 1) * 0xD1342543DE82EF95ULL));
}

}  // namespace reldiff
