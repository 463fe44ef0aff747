#pragma once

#include <cstdint>
#include <random>

namespace klrs {

// splitmix64; used to spread (seed, stream) pairs into engine seeds so
// parallel trials get independent, order-free streams.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::mt19937_64 seeded_engine(std::uint64_t seed, std::uint64_t stream) {
    return std::mt19937_64(mix64(mix64(seed) ^ stream));
}

// Uniform double in [0, 1) from the engine's top 53 bits; avoids
// distribution-object variation so draws are reproducible everywhere.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Index in [0, n) by rejection-free scaling; fine at desk scale.
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
    return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)) % n;
}

}  // namespace klrs
