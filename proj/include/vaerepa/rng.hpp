// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>

namespace vaerepa {

/// Mixes a base seed with up to two tags into an independent 64-bit key.
/// SplitMix64 finalizer applied in sequence; portable and order-sensitive.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag_a, std::uint64_t tag_b = 0);

/// Philox4x32-10 counter-based generator.
///
/// A (key, stream) pair names an independent sequence; the block counter
/// advances as values are drawn. Output depends only on integer arithmetic,
/// so uniform draws are bit-identical across platforms. Normal draws use the
/// Box-Muller transform.
class Philox {
public:
    Philox(std::uint64_t key, std::uint64_t stream = 0);

    std::uint32_t next_u32();
    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n), n > 0. Rejection sampling, no modulo bias.
    std::uint64_t below(std::uint64_t n);
    double normal();

    /// The raw 4x32 block for counter `ctr`; exposed for known-answer tests.
    static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                              std::array<std::uint32_t, 2> key);

private:
    void refill();

    std::array<std::uint32_t, 2> key_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
    std::array<std::uint32_t, 4> buf_{};
    int pos_ = 4;
    std::optional<double> spare_normal_;
};

}  // namespace vaerepa
