// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

// Compiled with -mavx2 -mfma; only reached when CPUID reports both.

#include <immintrin.h>

#include <cmath>

#include "vaerepa/kernels/kernels.hpp"

namespace vaerepa::kernels {
namespace {

constexpr std::size_t kRows = 4;

inline float a_at(const GemmArgs<float>& g, std::size_t i, std::size_t p) { return g.a[i * g.a_rs + p * g.a_cs]; }

template <std::size_t MR>
void block_16(const GemmArgs<float>& g, std::size_t i0, std::size_t j0) {
    __m256 acc0[MR], acc1[MR];
    _Pragma("GCC unroll 8") for (std::size_t r = 0; r < MR; ++r) acc0[r] = acc1[r] = _mm256_setzero_ps();
    for (std::size_t p = 0; p < g.k; ++p) {
        const float* brow = g.b + p * g.ldb + j0;
        const __m256 b0 = _mm256_loadu_ps(brow);
        const __m256 b1 = _mm256_loadu_ps(brow + 8);
        _Pragma("GCC unroll 8") for (std::size_t r = 0; r < MR; ++r) {
            const __m256 a = _mm256_set1_ps(a_at(g, i0 + r, p));
            acc0[r] = _mm256_fmadd_ps(a, b0, acc0[r]);
            acc1[r] = _mm256_fmadd_ps(a, b1, acc1[r]);
        }
    }
    _Pragma("GCC unroll 8") for (std::size_t r = 0; r < MR; ++r) {
        float* c = g.c + (i0 + r) * g.ldc + j0;
        if (g.accumulate) {
            acc0[r] = _mm256_add_ps(_mm256_loadu_ps(c), acc0[r]);
            acc1[r] = _mm256_add_ps(_mm256_loadu_ps(c + 8), acc1[r]);
        }
        _mm256_storeu_ps(c, acc0[r]);
        _mm256_storeu_ps(c + 8, acc1[r]);
    }
}

template <std::size_t MR>
void block_8(const GemmArgs<float>& g, std::size_t i0, std::size_t j0) {
    __m256 acc[MR];
    _Pragma("GCC unroll 8") for (std::size_t r = 0; r < MR; ++r) acc[r] = _mm256_setzero_ps();
    for (std::size_t p = 0; p < g.k; ++p) {
        const __m256 b0 = _mm256_loadu_ps(g.b + p * g.ldb + j0);
        _Pragma("GCC unroll 8") for (std::size_t r = 0; r < MR; ++r) acc[r] = _mm256_fmadd_ps(_mm256_set1_ps(a_at(g, i0 + r, p)), b0, acc[r]);
    }
    _Pragma("GCC unroll 8") for (std::size_t r = 0; r < MR; ++r) {
        float* c = g.c + (i0 + r) * g.ldc + j0;
        if (g.accumulate) acc[r] = _mm256_add_ps(_mm256_loadu_ps(c), acc[r]);
        _mm256_storeu_ps(c, acc[r]);
    }
}

void block_tail(const GemmArgs<float>& g, std::size_t i, std::size_t j0) {
    for (std::size_t j = j0; j < g.n; ++j) {
        float acc = 0.0f;
        for (std::size_t p = 0; p < g.k; ++p) acc = std::fma(a_at(g, i, p), g.b[p * g.ldb + j], acc);
        float& c = g.c[i * g.ldc + j];
        c = g.accumulate ? c + acc : acc;
    }
}

template <std::size_t MR>
void row_block(const GemmArgs<float>& g, std::size_t i0) {
    std::size_t j = 0;
    for (; j + 16 <= g.n; j += 16) block_16<MR>(g, i0, j);
    for (; j + 8 <= g.n; j += 8) block_8<MR>(g, i0, j);
    if (j < g.n)
        _Pragma("GCC unroll 8") for (std::size_t r = 0; r < MR; ++r) block_tail(g, i0 + r, j);
}

void gemm_avx2(const GemmArgs<float>& g) {
    std::size_t i = 0;
    for (; i + kRows <= g.m; i += kRows) row_block<kRows>(g, i);
    switch (g.m - i) {
        case 3: row_block<3>(g, i); break;
        case 2: row_block<2>(g, i); break;
        case 1: row_block<1>(g, i); break;
        default: break;
    }
}

void axpby_avx2(float a, const float* x, float b, const float* y, float* out, std::size_t n) {
    const __m256 va = _mm256_set1_ps(a), vb = _mm256_set1_ps(b);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 ax = _mm256_mul_ps(va, _mm256_loadu_ps(x + i));
        _mm256_storeu_ps(out + i, _mm256_fmadd_ps(vb, _mm256_loadu_ps(y + i), ax));
    }
    for (; i < n; ++i) out[i] = std::fma(b, y[i], a * x[i]);
}

void adamw_avx2(const AdamWParams& hp, float* param, const float* grad, float* m, float* v, std::size_t n) {
    const float decay = -hp.lr * hp.weight_decay;
    const float one_minus_b1 = 1.0f - hp.beta1;
    const float one_minus_b2 = 1.0f - hp.beta2;
    const __m256 vdecay = _mm256_set1_ps(decay), vb1 = _mm256_set1_ps(hp.beta1), vb2 = _mm256_set1_ps(hp.beta2);
    const __m256 vomb1 = _mm256_set1_ps(one_minus_b1), vomb2 = _mm256_set1_ps(one_minus_b2);
    const __m256 vbc1 = _mm256_set1_ps(hp.bias_correction1), vbc2 = _mm256_set1_ps(hp.bias_correction2);
    const __m256 veps = _mm256_set1_ps(hp.eps), vlr = _mm256_set1_ps(hp.lr);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 p0 = _mm256_loadu_ps(param + i);
        const __m256 p = _mm256_fmadd_ps(vdecay, p0, p0);
        const __m256 gi = _mm256_loadu_ps(grad + i);
        const __m256 mi = _mm256_fmadd_ps(vb1, _mm256_loadu_ps(m + i), _mm256_mul_ps(vomb1, gi));
        const __m256 vi = _mm256_fmadd_ps(vb2, _mm256_loadu_ps(v + i), _mm256_mul_ps(_mm256_mul_ps(vomb2, gi), gi));
        _mm256_storeu_ps(m + i, mi);
        _mm256_storeu_ps(v + i, vi);
        const __m256 m_hat = _mm256_div_ps(mi, vbc1);
        const __m256 v_hat = _mm256_div_ps(vi, vbc2);
        const __m256 step = _mm256_div_ps(m_hat, _mm256_add_ps(_mm256_sqrt_ps(v_hat), veps));
        _mm256_storeu_ps(param + i, _mm256_sub_ps(p, _mm256_mul_ps(vlr, step)));
    }
    for (; i < n; ++i) {
        float p = std::fma(decay, param[i], param[i]);
        const float gi = grad[i];
        m[i] = std::fma(hp.beta1, m[i], one_minus_b1 * gi);
        v[i] = std::fma(hp.beta2, v[i], (one_minus_b2 * gi) * gi);
        const float m_hat = m[i] / hp.bias_correction1;
        const float v_hat = v[i] / hp.bias_correction2;
        param[i] = p - hp.lr * (m_hat / (std::sqrt(v_hat) + hp.eps));
    }
}

void ema_avx2(float decay, float* ema, const float* param, std::size_t n) {
    const float rest = 1.0f - decay;
    const __m256 vd = _mm256_set1_ps(decay), vr = _mm256_set1_ps(rest);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 p = _mm256_mul_ps(vr, _mm256_loadu_ps(param + i));
        _mm256_storeu_ps(ema + i, _mm256_fmadd_ps(vd, _mm256_loadu_ps(ema + i), p));
    }
    for (; i < n; ++i) ema[i] = std::fma(decay, ema[i], rest * param[i]);
}

}  // namespace

const KernelTable& avx2_table() {
    static const KernelTable t{Isa::Avx2, gemm_avx2, axpby_avx2, adamw_avx2, ema_avx2};
    return t;
}

}  // namespace vaerepa::kernels
