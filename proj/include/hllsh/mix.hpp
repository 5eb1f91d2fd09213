#pragma once

#include <cstdint>

namespace hllsh {

// SplitMix64 finalizer. Bijective on 64-bit words.
inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline constexpr std::uint64_t rotl64(std::uint64_t x, int r) {
    return (x << r) | (x >> (64 - r));
}

/// Derives a child seed from a parent seed and a sequence of coordinates.
/// Distinct coordinate tuples give unrelated streams.
inline constexpr std::uint64_t derive_seed(std::uint64_t seed) {
    return splitmix64(seed);
}

template <typename... Rest>
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t first, Rest... rest) {
    std::uint64_t s = splitmix64(seed ^ splitmix64(first + 0x632be59bd9b4e019ULL));
    if constexpr (sizeof...(rest) == 0) {
        return s;
    } else {
        return derive_seed(s, static_cast<std::uint64_t>(rest)...);
    }
}

/// Maps a 64-bit word to a double in [0, 1) using the top 53 bits.
inline constexpr double unit_double(std::uint64_t x) {
    return static_cast<double>(x >> 11) * 0x1.0p-53;
}

} // namespace hllsh
