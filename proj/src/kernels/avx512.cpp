// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

// Compiled with -mavx512f -mfma; only reached when CPUID reports AVX-512F.
// Column tails use masked loads so every output element follows the
// reference accumulation order.

#include <immintrin.h>

#include <cmath>

#include "vaerepa/kernels/kernels.hpp"

namespace vaerepa::kernels {
namespace {

constexpr std::size_t kRows = 6;

inline float a_at(const GemmArgs<float>& g, std::size_t i, std::size_t p) { return g.a[i * g.a_rs + p * g.a_cs]; }

inline __mmask16 tail_mask(std::size_t w) { return w >= 16 ? __mmask16(0xFFFF) : __mmask16((1u << w) - 1u); }

// Two 16-lane column vectors per row; m0/m1 mask the valid lanes.
template <std::size_t MR>
void block_32(const GemmArgs<float>& g, std::size_t i0, std::size_t j0, __mmask16 m0, __mmask16 m1) {
    __m512 acc0[MR], acc1[MR];
    _Pragma("GCC unroll 8") for (std::size_t r = 0; r < MR; ++r) acc0[r] = acc1[r] = _mm512_setzero_ps();
    for (std::size_t p = 0; p < g.k; ++p) {
        const float* brow = g.b + p * g.ldb + j0;
        const __m512 b0 = _mm512_maskz_loadu_ps(m0, brow);
        const __m512 b1 = _mm512_maskz_loadu_ps(m1, brow + 16);
        _Pragma("GCC unroll 8") for (std::size_t r = 0; r < MR; ++r) {
            const __m512 a = _mm512_set1_ps(a_at(g, i0 + r, p));
            acc0[r] = _mm512_fmadd_ps(a, b0, acc0[r]);
            acc1[r] = _mm512_fmadd_ps(a, b1, acc1[r]);
        }
    }
    _Pragma("GCC unroll 8") for (std::size_t r = 0; r < MR; ++r) {
        float* c = g.c + (i0 + r) * g.ldc + j0;
        if (g.accumulate) {
            acc0[r] = _mm512_add_ps(_mm512_maskz_loadu_ps(m0, c), acc0[r]);
            acc1[r] = _mm512_add_ps(_mm512_maskz_loadu_ps(m1, c + 16), acc1[r]);
        }
        _mm512_mask_storeu_ps(c, m0, acc0[r]);
        _mm512_mask_storeu_ps(c + 16, m1, acc1[r]);
    }
}

template <std::size_t MR>
void row_block(const GemmArgs<float>& g, std::size_t i0) {
    for (std::size_t j = 0; j < g.n; j += 32) {
        const std::size_t w = g.n - j;
        const __mmask16 m0 = tail_mask(w);
        const __mmask16 m1 = w > 16 ? tail_mask(w - 16) : __mmask16(0);
        block_32<MR>(g, i0, j, m0, m1);
    }
}

void gemm_avx512(const GemmArgs<float>& g) {
    std::size_t i = 0;
    for (; i + kRows <= g.m; i += kRows) row_block<kRows>(g, i);
    switch (g.m - i) {
        case 5: row_block<5>(g, i); break;
        case 4: row_block<4>(g, i); break;
        case 3: row_block<3>(g, i); break;
        case 2: row_block<2>(g, i); break;
        case 1: row_block<1>(g, i); break;
        default: break;
    }
}

void axpby_avx512(float a, const float* x, float b, const float* y, float* out, std::size_t n) {
    const __m512 va = _mm512_set1_ps(a), vb = _mm512_set1_ps(b);
    for (std::size_t i = 0; i < n; i += 16) {
        const __mmask16 mk = tail_mask(n - i);
        const __m512 ax = _mm512_mul_ps(va, _mm512_maskz_loadu_ps(mk, x + i));
        _mm512_mask_storeu_ps(out + i, mk, _mm512_fmadd_ps(vb, _mm512_maskz_loadu_ps(mk, y + i), ax));
    }
}

void adamw_avx512(const AdamWParams& hp, float* param, const float* grad, float* m, float* v, std::size_t n) {
    const __m512 vdecay = _mm512_set1_ps(-hp.lr * hp.weight_decay);
    const __m512 vb1 = _mm512_set1_ps(hp.beta1), vb2 = _mm512_set1_ps(hp.beta2);
    const __m512 vomb1 = _mm512_set1_ps(1.0f - hp.beta1), vomb2 = _mm512_set1_ps(1.0f - hp.beta2);
    const __m512 vbc1 = _mm512_set1_ps(hp.bias_correction1), vbc2 = _mm512_set1_ps(hp.bias_correction2);
    const __m512 veps = _mm512_set1_ps(hp.eps), vlr = _mm512_set1_ps(hp.lr);
    for (std::size_t i = 0; i < n; i += 16) {
        const __mmask16 mk = tail_mask(n - i);
        const __m512 p0 = _mm512_maskz_loadu_ps(mk, param + i);
        const __m512 p = _mm512_fmadd_ps(vdecay, p0, p0);
        const __m512 gi = _mm512_maskz_loadu_ps(mk, grad + i);
        const __m512 mi = _mm512_fmadd_ps(vb1, _mm512_maskz_loadu_ps(mk, m + i), _mm512_mul_ps(vomb1, gi));
        const __m512 vi =
            _mm512_fmadd_ps(vb2, _mm512_maskz_loadu_ps(mk, v + i), _mm512_mul_ps(_mm512_mul_ps(vomb2, gi), gi));
        _mm512_mask_storeu_ps(m + i, mk, mi);
        _mm512_mask_storeu_ps(v + i, mk, vi);
        const __m512 m_hat = _mm512_div_ps(mi, vbc1);
        const __m512 v_hat = _mm512_div_ps(vi, vbc2);
        const __m512 step = _mm512_div_ps(m_hat, _mm512_add_ps(_mm512_sqrt_ps(v_hat), veps));
        _mm512_mask_storeu_ps(param + i, mk, _mm512_sub_ps(p, _mm512_mul_ps(vlr, step)));
    }
}

void ema_avx512(float decay, float* ema, const float* param, std::size_t n) {
    const __m512 vd = _mm512_set1_ps(decay), vr = _mm512_set1_ps(1.0f - decay);
    for (std::size_t i = 0; i < n; i += 16) {
        const __mmask16 mk = tail_mask(n - i);
        const __m512 p = _mm512_mul_ps(vr, _mm512_maskz_loadu_ps(mk, param + i));
        const __m512 e = _mm512_maskz_loadu_ps(mk, ema + i);
        _mm512_mask_storeu_ps(ema + i, mk, _mm512_fmadd_ps(vd, e, p));
    }
}

}  // namespace

const KernelTable& avx512_table() {
    static const KernelTable t{Isa::Avx512, gemm_avx512, axpby_avx512, adamw_avx512, ema_avx512};
    return t;
}

}  // namespace vaerepa::kernels
