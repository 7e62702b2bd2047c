#pragma once

// Counter-based random streams. Every random draw in the simulator is a pure
// function of (seed, stream ids..., counter), so parallel and serial runs
// produce identical values regardless of scheduling.

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace cdpsr::rng {

/// SplitMix64 finaliser: a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives a stream key from a seed and any number of stream identifiers.
constexpr std::uint64_t derive_key(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) noexcept {
    std::uint64_t k = mix64(seed ^ 0x5851f42d4c957f2dULL);
    for (auto id : ids) k = mix64(k ^ mix64(id + 0x2545f4914f6cdd1dULL));
    return k;
}

/// Uniform random bit generator whose n-th output is mix64(key + n·γ), i.e.
/// SplitMix64 started at a key-determined point. Usable with <random>
/// distributions.
class CounterEngine {
public:
    using result_type = std::uint64_t;

    explicit constexpr CounterEngine(std::uint64_t key, std::uint64_t counter = 0) noexcept
        : key_(key), counter_(counter) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() noexcept {
        return mix64(key_ + 0x9e3779b97f4a7c15ULL * counter_++);
    }

    constexpr std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_;
};

/// Uniform double in [0, 1) from the top 53 bits.
constexpr double to_unit(std::uint64_t bits) noexcept {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace cdpsr::rng
