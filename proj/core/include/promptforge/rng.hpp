#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace promptforge {

/// splitmix64 finaliser; a strong 64-bit mixing function.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Uniform double in (0, 1) from 64 random bits.
inline double bits_to_unit(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// Stateless normal draws keyed on (seed, stream, index). Any element can be
/// generated independently of every other, so weight generation does not
/// depend on construction order.
class CounterNormal {
public:
    CounterNormal(std::uint64_t seed, std::uint64_t stream)
        : key_(mix64(seed ^ mix64(stream * 0x2545f4914f6cdd1dULL))) {}

    double operator()(std::uint64_t index) const {
        const double u1 = bits_to_unit(mix64(key_ ^ (2 * index)));
        const double u2 = bits_to_unit(mix64(key_ ^ (2 * index + 1)));
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t key_;
};

/// Stateless uniform draws in (0, 1) keyed on (seed, stream, index).
inline double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    const std::uint64_t key = mix64(seed ^ mix64(stream * 0x9e6c63d0676a9a99ULL));
    return bits_to_unit(mix64(key ^ index));
}

/// Sequential generator for sampling and shuffling. The distributions are
/// implemented here because the standard ones are not portable bit-for-bit.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

    std::uint64_t next() { return engine_(); }
    double uniform() { return bits_to_unit(engine_()); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n) by rejection, n > 0.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    /// Uniform integer in [lo, hi].
    long long integer(long long lo, long long hi) {
        return lo + static_cast<long long>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Fisher-Yates shuffle.
    template <typename Vec>
    void shuffle(Vec& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace promptforge
