#pragma once

// Deterministic randomness helpers. std::uniform_*_distribution and
// std::shuffle are implementation-defined, so every draw here is spelled out
// explicitly: identical seeds must give identical artifacts on any platform.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace mockingbird {

using Rng = std::mt19937_64;

// Per-item seed for batch work: items are independent streams, so batch
// results cannot depend on scheduling order or worker count.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    return seed ^ index;
}

// Uniform in [lo, hi) using the top 53 bits of the generator word.
inline double uniform_real(Rng& rng, double lo, double hi) {
    double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
}

// Uniform index in [0, n). Modulo bias is < 2^-53 for any n this project uses.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    return static_cast<std::size_t>(rng() % n);
}

// Box-Muller without the usual cached second value; one draw consumes two
// generator words, which keeps the stream position a pure function of the
// call count.
inline double normal(Rng& rng, double mean, double stddev) {
    double u1 = uniform_real(rng, 0.0, 1.0);
    double u2 = uniform_real(rng, 0.0, 1.0);
    if (u1 < 1e-300) u1 = 1e-300;
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    return mean + stddev * z;
}

// Fisher-Yates with explicit index draws.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = uniform_index(rng, i);
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace mockingbird
