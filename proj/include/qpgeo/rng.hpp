#pragma once

// Seeded random streams. One u64 seed is split into named, independent
// streams so measurement noise can vary while drive realizations stay fixed.

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace qpgeo {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

/// Seed of the stream `name` under `base_seed`, optionally indexed (trial, point).
inline std::uint64_t stream_seed(std::uint64_t base_seed, std::string_view name,
                                 std::uint64_t index = 0) {
    return splitmix64(splitmix64(base_seed ^ fnv1a(name)) + index);
}

inline Rng make_stream(std::uint64_t base_seed, std::string_view name, std::uint64_t index = 0) {
    return Rng(stream_seed(base_seed, name, index));
}

/// Uniform draw in [0, 1) with a fixed bit recipe (independent of the
/// standard library's distribution implementations).
inline double uniform01(Rng &rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller on uniform01.
inline double standard_normal(Rng &rng) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) {
        u1 = uniform01(rng);
    }
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

} // namespace qpgeo
