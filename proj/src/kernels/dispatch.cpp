// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <algorithm>
#include <cmath>
#include <type_traits>
#include <cstdlib>
#include <string>
#include <vector>

#include "vaerepa/error.hpp"
#include "vaerepa/kernels/kernels.hpp"

namespace vaerepa::kernels {

const KernelTable& scalar_table();
#if defined(VAEREPA_HAVE_X86_SIMD)
const KernelTable& avx2_table();
const KernelTable& avx512_table();
#endif

std::string_view isa_name(Isa isa) {
    switch (isa) {
        case Isa::Scalar: return "scalar";
        case Isa::Avx2: return "avx2";
        case Isa::Avx512: return "avx512";
    }
    return "?";
}

bool isa_supported(Isa isa) {
    switch (isa) {
        case Isa::Scalar: return true;
#if defined(VAEREPA_HAVE_X86_SIMD)
        case Isa::Avx2: return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
        case Isa::Avx512: return __builtin_cpu_supports("avx512f") && __builtin_cpu_supports("fma");
#else
        default: return false;
#endif
    }
    return false;
}

namespace {

Isa detect() {
    if (const char* env = std::getenv("VAEREPA_ISA")) {
        const std::string s(env);
        for (Isa isa : {Isa::Scalar, Isa::Avx2, Isa::Avx512})
            if (s == isa_name(isa) && isa_supported(isa)) return isa;
    }
    if (isa_supported(Isa::Avx512)) return Isa::Avx512;
    if (isa_supported(Isa::Avx2)) return Isa::Avx2;
    return Isa::Scalar;
}

std::atomic<Isa>& current() {
    static std::atomic<Isa> isa{detect()};
    return isa;
}

}  // namespace

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
    require(isa_supported(isa), ErrorKind::Config, "kernel variant {} is not supported on this CPU", isa_name(isa));
    current().store(isa, std::memory_order_relaxed);
}

const KernelTable& table(Isa isa) {
    switch (isa) {
#if defined(VAEREPA_HAVE_X86_SIMD)
        case Isa::Avx2: return avx2_table();
        case Isa::Avx512: return avx512_table();
#endif
        default: return scalar_table();
    }
}

namespace {

template <typename T>
void run(const GemmArgs<T>& g) {
    if (g.m == 0 || g.n == 0) return;
    if constexpr (std::is_same_v<T, float>) {
        active().gemm(g);
    } else {
        gemm_reference(g);
    }
}

}  // namespace

template <typename T>
void matmul_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
    run(GemmArgs<T>{m, n, k, a, k, 1, b, n, c, n, accumulate});
}

template <typename T>
void matmul_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
    run(GemmArgs<T>{m, n, k, a, 1, m, b, n, c, n, accumulate});
}

template <typename T>
void matmul_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
    // Materialize B^T so the inner loop streams contiguous rows.
    thread_local std::vector<T> bt;
    bt.resize(k * n);
    constexpr std::size_t kTile = 32;
    for (std::size_t j0 = 0; j0 < n; j0 += kTile)
        for (std::size_t p0 = 0; p0 < k; p0 += kTile) {
            const std::size_t j1 = std::min(n, j0 + kTile), p1 = std::min(k, p0 + kTile);
            for (std::size_t j = j0; j < j1; ++j)
                for (std::size_t p = p0; p < p1; ++p) bt[p * n + j] = b[j * k + p];
        }
    run(GemmArgs<T>{m, n, k, a, k, 1, bt.data(), n, c, n, accumulate});
}

template <typename T>
void axpby(T a, std::span<const T> x, T b, std::span<const T> y, std::span<T> out) {
    require(x.size() == y.size() && x.size() == out.size(), ErrorKind::Shape, "axpby: length mismatch");
    if constexpr (std::is_same_v<T, float>) {
        active().axpby(a, x.data(), b, y.data(), out.data(), out.size());
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fma(b, y[i], a * x[i]);
    }
}

template void matmul_nn<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*, bool);
template void matmul_nn<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool);
template void matmul_tn<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*, bool);
template void matmul_tn<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool);
template void matmul_nt<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*, bool);
template void matmul_nt<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool);
template void axpby<float>(float, std::span<const float>, float, std::span<const float>, std::span<float>);
template void axpby<double>(double, std::span<const double>, double, std::span<const double>, std::span<double>);

}  // namespace vaerepa::kernels
