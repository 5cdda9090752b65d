#pragma once

#include <cstdint>

namespace ltw {

// SplitMix64 finalizer (Steele, Lea, Flood 2014; Vigna's fixed-increment
// variant). Stateless mix of a 64-bit input, bit-exact across platforms so
// masks derived during generation can be re-derived during detection.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Sequential SplitMix64 stream.
class SplitMix64 {
public:
    explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    constexpr std::uint64_t next() noexcept {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1) with 53 random bits.
    double next_double() noexcept {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, bound) by bitmask rejection. No modulo, so the
    // draw sequence is reproducible from the raw 64-bit stream alone.
    std::uint64_t bounded(std::uint64_t bound) noexcept {
        std::uint64_t mask = bound - 1;
        mask |= mask >> 1;
        mask |= mask >> 2;
        mask |= mask >> 4;
        mask |= mask >> 8;
        mask |= mask >> 16;
        mask |= mask >> 32;
        for (;;) {
            std::uint64_t x = next() & mask;
            if (x < bound) return x;
        }
    }

    constexpr std::uint64_t state() const noexcept { return state_; }

private:
    std::uint64_t state_;
};

// Stable derivation of sub-seeds from one global seed, used so independent
// components (selector init, per-prompt sampling, attacks) never share a
// stream.
constexpr std::uint64_t derive_substream(std::uint64_t seed, std::uint64_t tag,
                                         std::uint64_t index = 0) noexcept {
    return mix64(mix64(seed ^ tag) ^ index);
}

} // namespace ltw
