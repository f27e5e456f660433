#pragma once

// Counter-based SplitMix64 generator.
//
// Every draw is a pure function of (seed, counter):
//
//   z  = seed + (counter + 1) * 0x9E3779B97F4A7C15   (mod 2^64)
//   z  = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z  = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   out = z ^ (z >> 31)
//
// The counter starts at 0 and increments once per 64-bit draw. Bounded
// integers in [0, n) use rejection: draws below (2^64 - n) mod n are
// discarded, the accepted draw is reduced mod n. Uniform doubles take the
// top 53 bits. These rules are the whole contract; any implementation that
// follows them reproduces the same masks and synthetic datasets from a seed.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace aape {

class SplitMix64 {
public:
    static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

    explicit constexpr SplitMix64(std::uint64_t seed) noexcept : seed_(seed) {}

    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    static constexpr std::uint64_t at(std::uint64_t seed, std::uint64_t counter) noexcept {
        return mix(seed + (counter + 1) * kGamma);
    }

    constexpr std::uint64_t next() noexcept { return at(seed_, counter_++); }

    constexpr std::uint64_t bounded(std::uint64_t n) noexcept {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t x = next();
            if (x >= threshold) return x % n;
        }
    }

    // [0, 1)
    constexpr double uniform() noexcept {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    bool bernoulli(double p) noexcept { return uniform() < p; }

    // Box-Muller, one value per call (the sine branch is discarded so the
    // counter advances by exactly two per normal draw).
    double normal() noexcept {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    constexpr std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

// Independent stream for a sub-task (layer, sample, seed index...).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    return SplitMix64::mix(seed ^ SplitMix64::mix(stream + SplitMix64::kGamma));
}

}  // namespace aape
