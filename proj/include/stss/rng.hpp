#pragma once

#include <cstdint>
#include <random>

#include "stss/moments.hpp"

namespace stss {

/// splitmix64 finalizer; stable across platforms and versions.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Deterministic seed derivation: fold each component through splitmix64.
inline std::uint64_t derive_seed(std::uint64_t base) { return mix64(base); }

template <typename... Rest>
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t first, Rest... rest) {
    return derive_seed(mix64(base ^ mix64(first)), rest...);
}

/// Seeded RNG with a portable normal sampler (inverse-CDF transform of
/// mt19937_64 uniforms), so identical seeds give identical streams on any
/// standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    /// uniform in the open interval (0, 1)
    double uniform() {
        return (static_cast<double>(gen_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
    }

    double normal() { return probit_inverse(uniform()); }

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 gen_;
};

} // namespace stss
