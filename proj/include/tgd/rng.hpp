#pragma once

#include <cmath>
#include <cstdint>

#include "tgd/math.hpp"

namespace tgd {

// Bijective 64-bit finalizer (splitmix64 style).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Key for a child stream. Distinct (parent, id) pairs give statistically
// independent streams, so substreams can be laid out hierarchically without
// coordinating counters.
constexpr std::uint64_t derive_key(std::uint64_t parent, std::uint64_t id) noexcept {
    return mix64(parent ^ mix64(id ^ 0xd1b54a32d192ed03ULL));
}

// Counter-based stream: draw n is a hash of (key, n). Recreating the stream
// from its key replays the identical sequence regardless of what any other
// stream consumed, which is what makes per-particle work order-independent.
class RngStream {
  public:
    constexpr explicit RngStream(std::uint64_t key) noexcept : key_(key) {}

    std::uint64_t next_u64() noexcept {
        const std::uint64_t z = mix64(key_ + 0x9e3779b97f4a7c15ULL * ++ctr_);
        return mix64(z ^ key_);
    }

    // Uniform on [0, 1), 53-bit resolution.
    double u01() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1]; safe as a log() argument.
    double u01_pos() noexcept {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * u01(); }

    // Standard normal via Box-Muller; consumes exactly two uniforms per call
    // and keeps no cached state, so draw positions stay counter-addressable.
    double normal() noexcept {
        const double u1 = u01_pos();
        const double u2 = u01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    void fill_normal(Vec& out) noexcept {
        for (double& v : out) v = normal();
    }

    std::uint64_t key() const noexcept { return key_; }
    std::uint64_t counter() const noexcept { return ctr_; }

  private:
    std::uint64_t key_;
    std::uint64_t ctr_ = 0;
};

}  // namespace tgd
