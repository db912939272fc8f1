// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <array>
#include <cmath>
#include <set>

#include "vaerepa/rng.hpp"

using namespace vaerepa;

TEST_CASE("philox4x32-10 known-answer vectors") {
    // Reference outputs published with the Random123 library.
    using B = std::array<std::uint32_t, 4>;
    using K = std::array<std::uint32_t, 2>;
    CHECK(Philox::block(B{0, 0, 0, 0}, K{0, 0}) == B{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(Philox::block(B{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, K{0xffffffff, 0xffffffff}) ==
          B{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(Philox::block(B{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, K{0xa4093822, 0x299f31d0}) ==
          B{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("streams are reproducible and distinct") {
    Philox a(42, 0), b(42, 0), c(42, 1), d(43, 0);
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next_u64();
        CHECK(x == b.next_u64());
        CHECK(x != c.next_u64());
        CHECK(x != d.next_u64());
    }
}

TEST_CASE("uniform draws stay in [0, 1) and have the right first two moments") {
    Philox rng(7);
    const int n = 200000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        s += u;
        s2 += u * u;
    }
    const double mean = s / n, var = s2 / n - mean * mean;
    // Standard errors: 1/sqrt(12 n) ~ 6.5e-4 for the mean.
    CHECK(std::abs(mean - 0.5) < 4e-3);
    CHECK(std::abs(var - 1.0 / 12.0) < 2e-3);
}

TEST_CASE("normal draws have zero mean, unit variance and no extreme skew") {
    Philox rng(11);
    const int n = 200000;
    double s = 0, s2 = 0, s3 = 0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        REQUIRE(std::isfinite(z));
        s += z;
        s2 += z * z;
        s3 += z * z * z;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(std::abs(s2 / n - 1.0) < 0.015);
    CHECK(std::abs(s3 / n) < 0.03);
}

TEST_CASE("below is unbiased over a small range") {
    Philox rng(3);
    std::array<int, 5> counts{};
    for (int i = 0; i < 50000; ++i) ++counts[rng.below(5)];
    for (int c : counts) CHECK(std::abs(c - 10000) < 400);
}

TEST_CASE("derive_seed separates tags and is order sensitive") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t base = 0; base < 20; ++base)
        for (std::uint64_t tag = 0; tag < 20; ++tag) seen.insert(derive_seed(base, tag));
    CHECK(seen.size() == 400);
    CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
    CHECK(derive_seed(5, 6) == derive_seed(5, 6, 0));
}
