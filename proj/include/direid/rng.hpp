#pragma once

#include <cstdint>
#include <random>

namespace direid {

/// SplitMix64 finalizer; used to derive independent sub-seeds from one
/// experiment seed (e.g. mix(seed, iteration) for per-batch streams).
constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0x9E3779B97F4A7C15ULL) {
    std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Deterministic random stream. The engine is fully specified by the standard
/// and the conversions below avoid the implementation-defined std
/// distributions, so draws are identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [0, n), unbiased (rejection sampling).
    std::uint64_t below(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = next();
        } while (x >= limit);
        return x % n;
    }

    /// Fisher-Yates with `below`, so shuffles are portable too.
    template <class Container>
    void shuffle(Container& c) {
        for (std::size_t i = c.size(); i > 1; --i) {
            std::swap(c[i - 1], c[below(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace direid
