#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace dsnet {

// Deterministic SplitMix64 generator. The state walks a fixed Weyl sequence
// (increment 0x9E3779B97F4A7C15) and each output is the state passed through
// two xorshift-multiply mixing rounds, so a given seed yields the same draw
// sequence on every platform and build. Single-owner: never share one
// RngState between threads.
class RngState {
public:
    explicit RngState(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0,1) with 53 random mantissa bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Box-Muller using two draws; the sine partner is discarded so the
    // draw count per call is fixed.
    double normal(double mean, double stddev) {
        double u1 = 1.0 - next_double();  // (0,1], keeps the log finite
        double u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Uniform integer in [0,n). Modulo bias is below n/2^64 and irrelevant
    // at the sizes used here.
    std::uint64_t next_below(std::uint64_t n) {
        return next_u64() % n;
    }

private:
    std::uint64_t state_;
};

// Stable sub-stream derivation: mixes a tag (FNV-1a over its bytes) and an
// index into the base seed so distinct phases of a run (init, shuffling,
// dropout, ...) never share a draw sequence.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag,
                                 std::uint64_t index = 0) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    h ^= index + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
    h ^= seed + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
    return h;
}

}  // namespace dsnet
