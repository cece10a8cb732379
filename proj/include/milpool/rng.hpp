#pragma once

// Seedable random source with named sub-streams.
//
// Engine: std::mt19937_64, whose output sequence is fixed by the C++ standard,
// so streams are reproducible across standard libraries. Distributions are
// implemented here rather than with <random> distributions, whose algorithms
// are implementation-defined:
//   uniform  = top 53 bits of one engine draw, scaled by 2^-53, in [0, 1)
//   normal   = Box-Muller, cos branch only: sqrt(-2 ln(1-u1)) cos(2 pi u2)
//   below(n) = rejection sampling on the top of the 64-bit range (unbiased)
// Sub-stream seeds are splitmix64(seed + golden * (tag + 1)).

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <utility>

namespace milpool {

/// Consumers of randomness; each gets its own stream so reordering one
/// never shifts another.
enum class Stream : std::uint64_t {
    init = 1,
    dropout = 2,
    sampler = 3,
    generator = 4,
    split = 5,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(splitmix64(seed)) {}

    std::uint64_t seed() const noexcept { return seed_; }

    /// Independent child stream; depends only on (seed, tag).
    Rng derive(std::uint64_t tag) const {
        return Rng(splitmix64(seed_ + 0x9E3779B97F4A7C15ULL * (tag + 1)));
    }
    Rng derive(Stream s) const { return derive(static_cast<std::uint64_t>(s)); }

    std::uint64_t next_u64() { return engine_(); }

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double normal() {
        const double u1 = 1.0 - uniform(); // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    /// Fisher-Yates, back to front.
    template <class T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    friend bool operator==(const Rng&, const Rng&) = default;

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

} // namespace milpool
