// Copyright 2026 The lrc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Portable deterministic randomness. Every stochastic step in the toolkit is
// driven by SplitMix64 so that splits, calibration draws and toy weights are
// reproducible across compilers and standard libraries (std::*_distribution
// output is implementation-defined).
//
//   state += 0x9E3779B97F4A7C15
//   z = state
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   return z ^ (z >> 31)

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace lrc {

class SplitMix64 {
public:
    explicit SplitMix64(uint64_t seed) : state_(seed) {}

    uint64_t next() {
        state_ += 0x9E3779B97F4A7C15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform integer in [0, bound). Plain modulo; the bias is below 2^-40
    // for every bound this toolkit uses.
    uint64_t below(uint64_t bound) { return next() % bound; }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller (one draw per call, no caching).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    uint64_t state_;
};

// 64-bit FNV-1a. Used for labelled seed derivation and content hashes.
inline uint64_t fnv1a64(std::string_view bytes, uint64_t h = 0xCBF29CE484222325ULL) {
    for (const char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

// Fans a single run seed out into independent per-purpose streams.
inline uint64_t derive_seed(uint64_t seed, std::string_view purpose) {
    SplitMix64 mix(seed ^ fnv1a64(purpose));
    return mix.next();
}

} // namespace lrc
