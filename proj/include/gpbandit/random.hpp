#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace gpbandit {

// splitmix64, the usual constants. We need draws that are a pure function of
// (seed, stream, counter) so paired runs replay identical realizations no
// matter in which order or how often a value is asked for; the std <random>
// distributions are implementation defined, which rules them out for anything
// that ends up in a persisted record.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t counter_bits(std::uint64_t key, std::uint64_t stream, std::uint64_t counter) {
    return splitmix64(splitmix64(splitmix64(key) ^ stream) ^ counter);
}

// uniform on (0,1], 53 bits; never 0 so log() is safe
inline double bits_to_unit(std::uint64_t bits) {
    return static_cast<double>((bits >> 11) + 1) * 0x1.0p-53;
}

inline double uniform01(std::uint64_t key, std::uint64_t stream, std::uint64_t counter) {
    return bits_to_unit(counter_bits(key, stream, counter));
}

// index in [0, n), multiply-shift; bias is < n / 2^64
inline std::size_t uniform_index(std::uint64_t key, std::uint64_t stream, std::uint64_t counter,
                                 std::size_t n) {
    const std::uint64_t b = counter_bits(key, stream, counter);
    return static_cast<std::size_t>((static_cast<unsigned __int128>(b) * n) >> 64);
}

// standard normal via Box-Muller; consumes counters 2c and 2c+1 of the stream
inline double standard_normal(std::uint64_t key, std::uint64_t stream, std::uint64_t counter) {
    const double u1 = bits_to_unit(counter_bits(key, stream, 2 * counter));
    const double u2 = bits_to_unit(counter_bits(key, stream, 2 * counter + 1));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// stream tags, one per consumer so counters never collide
namespace streams {
constexpr std::uint64_t noise = 0x6e6f697365ULL;
constexpr std::uint64_t rkhs_centers = 0x63656e7472ULL;
constexpr std::uint64_t rkhs_coeffs = 0x636f656666ULL;
constexpr std::uint64_t sequence = 0x73657175ULL;
constexpr std::uint64_t domain = 0x646f6dULL;
}  // namespace streams

}  // namespace gpbandit
