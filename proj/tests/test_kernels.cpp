// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "support.hpp"
#include "vaerepa/kernels/kernels.hpp"

using namespace vaerepa;
using kernels::Isa;

namespace {

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
    Philox rng(seed);
    std::vector<float> v(n);
    for (auto& x : v) x = float(rng.normal());
    return v;
}

bool bits_equal(const std::vector<float>& a, const std::vector<float>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

std::vector<Isa> simd_variants() {
    std::vector<Isa> out;
    for (Isa isa : {Isa::Avx2, Isa::Avx512})
        if (kernels::isa_supported(isa)) out.push_back(isa);
    return out;
}

// Straight triple loop with the documented accumulation order.
void naive_gemm(const kernels::GemmArgs<float>& g) {
    for (std::size_t i = 0; i < g.m; ++i)
        for (std::size_t j = 0; j < g.n; ++j) {
            float acc = 0;
            for (std::size_t p = 0; p < g.k; ++p) acc = std::fma(g.a[i * g.a_rs + p * g.a_cs], g.b[p * g.ldb + j], acc);
            float& c = g.c[i * g.ldc + j];
            c = g.accumulate ? c + acc : acc;
        }
}

struct GemmCase {
    std::size_t m, n, k;
    bool transposed_a, accumulate;
};

}  // namespace

TEST_CASE("scalar gemm matches a naive triple loop bit for bit") {
    for (const GemmCase& gc : {GemmCase{1, 1, 1, false, false}, GemmCase{7, 13, 5, false, true},
                               GemmCase{33, 70, 19, true, false}, GemmCase{6, 48, 64, true, true}}) {
        const auto a = random_vec(gc.m * gc.k, 1), b = random_vec(gc.k * gc.n, 2);
        auto c1 = random_vec(gc.m * gc.n, 3), c2 = c1;
        const std::size_t rs = gc.transposed_a ? 1 : gc.k, cs = gc.transposed_a ? gc.m : 1;
        kernels::table(Isa::Scalar).gemm({gc.m, gc.n, gc.k, a.data(), rs, cs, b.data(), gc.n, c1.data(), gc.n, gc.accumulate});
        naive_gemm({gc.m, gc.n, gc.k, a.data(), rs, cs, b.data(), gc.n, c2.data(), gc.n, gc.accumulate});
        CHECK(bits_equal(c1, c2));
    }
}

TEST_CASE("SIMD gemm variants are bit-identical to the scalar reference") {
    const auto variants = simd_variants();
    if (variants.empty()) MESSAGE("no SIMD variant supported on this CPU");
    Philox shapes(99);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t m = 1 + shapes.below(40), n = 1 + shapes.below(90), k = 1 + shapes.below(70);
        const bool ta = shapes.below(2) == 1, acc = shapes.below(2) == 1;
        const std::size_t ldb = n + shapes.below(3), ldc = n + shapes.below(3);
        const auto a = random_vec(m * k, 10 + trial), b = random_vec(k * ldb, 20 + trial);
        const auto c0 = random_vec(m * ldc, 30 + trial);
        const std::size_t rs = ta ? 1 : k, cs = ta ? m : 1;
        auto ref = c0;
        kernels::table(Isa::Scalar).gemm({m, n, k, a.data(), rs, cs, b.data(), ldb, ref.data(), ldc, acc});
        for (Isa isa : variants) {
            auto out = c0;
            kernels::table(isa).gemm({m, n, k, a.data(), rs, cs, b.data(), ldb, out.data(), ldc, acc});
            INFO(kernels::isa_name(isa), " m=", m, " n=", n, " k=", k);
            CHECK(bits_equal(out, ref));
        }
    }
}

TEST_CASE("SIMD elementwise kernels are bit-identical to the scalar reference") {
    for (std::size_t n : {1u, 7u, 8u, 15u, 16u, 17u, 100u, 1031u}) {
        const auto x = random_vec(n, 1), y = random_vec(n, 2), g = random_vec(n, 3);
        auto m0 = random_vec(n, 4);
        auto v0 = random_vec(n, 5);
        for (auto& v : v0) v = v * v;
        const kernels::AdamWParams hp{1e-3f, 0.9f, 0.999f, 1e-8f, 0.01f, 1.0f - 0.9f * 0.9f, 1.0f - 0.999f * 0.999f};

        std::vector<float> axpby_ref(n), p_ref = x, m_ref = m0, v_ref = v0, e_ref = y;
        const auto& s = kernels::table(Isa::Scalar);
        s.axpby(0.3f, x.data(), -1.7f, y.data(), axpby_ref.data(), n);
        s.adamw(hp, p_ref.data(), g.data(), m_ref.data(), v_ref.data(), n);
        s.ema(0.99f, e_ref.data(), x.data(), n);

        for (Isa isa : simd_variants()) {
            INFO(kernels::isa_name(isa), " n=", n);
            const auto& t = kernels::table(isa);
            std::vector<float> out(n), p = x, m = m0, v = v0, e = y;
            t.axpby(0.3f, x.data(), -1.7f, y.data(), out.data(), n);
            t.adamw(hp, p.data(), g.data(), m.data(), v.data(), n);
            t.ema(0.99f, e.data(), x.data(), n);
            CHECK(bits_equal(out, axpby_ref));
            CHECK(bits_equal(p, p_ref));
            CHECK(bits_equal(m, m_ref));
            CHECK(bits_equal(v, v_ref));
            CHECK(bits_equal(e, e_ref));
        }
    }
}

TEST_CASE("ema kernel is exact at decay 0 and 1 in every variant") {
    const auto p = random_vec(37, 7), e0 = random_vec(37, 8);
    std::vector<Isa> all{Isa::Scalar};
    for (Isa isa : simd_variants()) all.push_back(isa);
    for (Isa isa : all) {
        auto e = e0;
        kernels::table(isa).ema(0.0f, e.data(), p.data(), e.size());
        CHECK(bits_equal(e, p));
        e = e0;
        kernels::table(isa).ema(1.0f, e.data(), p.data(), e.size());
        CHECK(bits_equal(e, e0));
    }
}

TEST_CASE("matmul entry points agree with their definitions") {
    const std::size_t m = 5, n = 9, k = 11;
    const auto a = random_vec(m * k, 1), at = random_vec(k * m, 2), b = random_vec(k * n, 3), bt = random_vec(n * k, 4);
    auto expect = [&](auto A, auto B) {
        std::vector<double> c(m * n);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t p = 0; p < k; ++p) c[i * n + j] += double(A(i, p)) * double(B(p, j));
        return c;
    };
    std::vector<float> c(m * n);
    auto close = [&](const std::vector<double>& e) {
        for (std::size_t i = 0; i < c.size(); ++i) REQUIRE(c[i] == doctest::Approx(e[i]).epsilon(1e-5));
    };
    kernels::matmul_nn<float>(m, n, k, a.data(), b.data(), c.data(), false);
    close(expect([&](auto i, auto p) { return a[i * k + p]; }, [&](auto p, auto j) { return b[p * n + j]; }));
    kernels::matmul_tn<float>(m, n, k, at.data(), b.data(), c.data(), false);
    close(expect([&](auto i, auto p) { return at[p * m + i]; }, [&](auto p, auto j) { return b[p * n + j]; }));
    kernels::matmul_nt<float>(m, n, k, a.data(), bt.data(), c.data(), false);
    close(expect([&](auto i, auto p) { return a[i * k + p]; }, [&](auto p, auto j) { return bt[j * k + p]; }));
}

TEST_CASE("set_isa switches the active table") {
    const Isa before = kernels::active_isa();
    kernels::set_isa(Isa::Scalar);
    CHECK(kernels::active().isa == Isa::Scalar);
    kernels::set_isa(before);
    CHECK(kernels::active().isa == before);
}
