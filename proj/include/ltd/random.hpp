#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace ltd {

// mt19937_64 is fully specified by the standard; the helpers below avoid the
// implementation-defined std::*_distribution so seeded runs match across toolchains.
using rng_t = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) { return splitmix64(a ^ splitmix64(b)); }

// Uniform on [0, 1).
inline double uniform01(rng_t& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(rng_t& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// Uniform integer on [0, n).
inline std::uint64_t bounded(rng_t& rng, std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

inline double log_uniform(rng_t& rng, double lo, double hi) {
    return std::exp(uniform(rng, std::log(lo), std::log(hi)));
}

template <typename T>
void shuffle(std::vector<T>& v, rng_t& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[bounded(rng, i)]);
    }
}

} // namespace ltd
