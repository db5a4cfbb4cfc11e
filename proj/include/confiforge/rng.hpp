#pragma once

#include <cstdint>

namespace confiforge {

// Deterministic 64-bit generator (splitmix64). We roll our own instead of
// using <random> distributions because their output differs across standard
// library implementations, and generated files must be byte-identical for a
// given seed on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Unbiased integer in [0, bound). bound must be > 0.
    std::uint64_t next_below(std::uint64_t bound) {
        const std::uint64_t limit = bound * ((~std::uint64_t{0} / bound));
        std::uint64_t v = next();
        while (v >= limit) v = next();
        return v % bound;
    }

private:
    std::uint64_t state_;
};

// Stable per-instance seed derivation: mixing the run seed with an instance
// index gives order-independent parallel generation.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    Rng r(index + 0x632BE59BD9B4E019ull);
    std::uint64_t salted = r.next();
    Rng s(seed ^ salted);
    return s.next();
}

}  // namespace confiforge
