#pragma once

#include <cstdint>
#include <random>

namespace expavg {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Seed of the index-th substream of `seed`. Depends only on (seed, index),
/// so work can be split across threads in any order.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    return mix64(mix64(seed) ^ mix64(index + 0x632BE59BD9B4E019ull));
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed) { return Engine(mix64(seed)); }

/// Uniform on the open interval (0, 1).
inline double uniform_open(Engine& eng) {
    for (;;) {
        const double u = std::generate_canonical<double, 53>(eng);
        if (u > 0.0) return u;
    }
}

}  // namespace expavg
