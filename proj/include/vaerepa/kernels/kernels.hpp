// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

// Data-parallel inner loops. Every kernel has a scalar reference
// implementation and SIMD variants selected once at runtime from CPUID.
//
// The SIMD variants follow the same per-element operation order as the
// scalar reference and use fused multiply-add in both, so results are
// bit-identical across variants. Tests assert exact equality.

#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace vaerepa::kernels {

enum class Isa { Scalar, Avx2, Avx512 };

std::string_view isa_name(Isa isa);
bool isa_supported(Isa isa);
/// Best supported variant, unless overridden by VAEREPA_ISA=scalar|avx2|avx512.
Isa active_isa();
/// Forces a variant for the calling process; throws if unsupported.
void set_isa(Isa isa);

/// C(i,j) (+)= sum_p A(i,p) * B(p,j), where A(i,p) = a[i*a_rs + p*a_cs] and
/// B(p,j) = b[p*ldb + j]. The sum is accumulated from zero in increasing p
/// and added to C at the end when `accumulate` is set.
template <typename T>
struct GemmArgs {
    std::size_t m, n, k;
    const T* a;
    std::size_t a_rs, a_cs;
    const T* b;
    std::size_t ldb;
    T* c;
    std::size_t ldc;
    bool accumulate;
};

struct AdamWParams {
    float lr, beta1, beta2, eps, weight_decay;
    float bias_correction1;  // 1 - beta1^step
    float bias_correction2;  // 1 - beta2^step
};

struct KernelTable {
    Isa isa;
    void (*gemm)(const GemmArgs<float>&);
    /// out = a*x + b*y, evaluated as fma(b, y, a*x).
    void (*axpby)(float a, const float* x, float b, const float* y, float* out, std::size_t n);
    void (*adamw)(const AdamWParams& hp, float* param, const float* grad, float* m, float* v, std::size_t n);
    /// ema = fma(decay, ema, (1 - decay) * p); exact at decay 0 and 1.
    void (*ema)(float decay, float* ema, const float* param, std::size_t n);
};

const KernelTable& table(Isa isa);
inline const KernelTable& active() { return table(active_isa()); }

// Scalar reference, templated so the same code serves f64 gradient checks.
template <typename T>
void gemm_reference(const GemmArgs<T>& g);

// Row-major convenience entry points used by the autodiff ops. Dispatch
// to the active variant for float and to the reference for double.

/// C[m,n] (+)= A[m,k] * B[k,n]
template <typename T>
void matmul_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);
/// C[m,n] (+)= A[k,m]^T * B[k,n]
template <typename T>
void matmul_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);
/// C[m,n] (+)= A[m,k] * B[n,k]^T
template <typename T>
void matmul_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);

template <typename T>
void axpby(T a, std::span<const T> x, T b, std::span<const T> y, std::span<T> out);

}  // namespace vaerepa::kernels
