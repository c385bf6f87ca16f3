// Copyright (c) 2026 avprune contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

namespace avprune {

// Thin wrapper over std::mt19937_64 that maps raw 64-bit draws to doubles
// with fixed arithmetic. std::*_distribution is implementation-defined, so
// everything here avoids it: same seed gives bit-identical streams on every
// platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next() { return gen_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform in [-scale, scale).
    double symmetric(double scale) { return (2.0 * unit() - 1.0) * scale; }

    // Uniform integer in [0, n). Modulo bias is irrelevant at toy scale and
    // keeps the mapping platform-stable.
    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }

private:
    std::mt19937_64 gen_;
};

}  // namespace avprune
