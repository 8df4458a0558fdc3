#pragma once

// Reproducible, splittable random streams.  Every stochastic component in the
// library derives its generator from a (master seed, stream index) pair via a
// splitmix64 scramble, so disorder realizations, restarts, Monte Carlo batches
// and worker tasks all get statistically independent, order-independent streams.

#include <cstdint>
#include <random>

namespace qsk {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Collapse (seed, stream) into a single well-mixed 64-bit value.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t s = seed;
    std::uint64_t a = splitmix64(s);
    s ^= stream * 0xda942042e4dd58b5ull;
    std::uint64_t b = splitmix64(s);
    return a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
}

inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream = 0) {
    return std::mt19937_64(derive_seed(seed, stream));
}

}  // namespace qsk
