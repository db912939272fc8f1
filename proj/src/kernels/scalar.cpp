// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include "vaerepa/kernels/kernels.hpp"

namespace vaerepa::kernels {

template <typename T>
void gemm_reference(const GemmArgs<T>& g) {
    std::vector<T> acc(g.n);
    for (std::size_t i = 0; i < g.m; ++i) {
        std::fill(acc.begin(), acc.end(), T{0});
        for (std::size_t p = 0; p < g.k; ++p) {
            const T a = g.a[i * g.a_rs + p * g.a_cs];
            const T* brow = g.b + p * g.ldb;
            for (std::size_t j = 0; j < g.n; ++j) acc[j] = std::fma(a, brow[j], acc[j]);
        }
        T* crow = g.c + i * g.ldc;
        if (g.accumulate) {
            for (std::size_t j = 0; j < g.n; ++j) crow[j] = crow[j] + acc[j];
        } else {
            for (std::size_t j = 0; j < g.n; ++j) crow[j] = acc[j];
        }
    }
}

template void gemm_reference<float>(const GemmArgs<float>&);
template void gemm_reference<double>(const GemmArgs<double>&);

namespace {

void gemm_scalar(const GemmArgs<float>& g) { gemm_reference(g); }

void axpby_scalar(float a, const float* x, float b, const float* y, float* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::fma(b, y[i], a * x[i]);
}

void adamw_scalar(const AdamWParams& hp, float* param, const float* grad, float* m, float* v, std::size_t n) {
    const float decay = -hp.lr * hp.weight_decay;
    const float one_minus_b1 = 1.0f - hp.beta1;
    const float one_minus_b2 = 1.0f - hp.beta2;
    for (std::size_t i = 0; i < n; ++i) {
        float p = std::fma(decay, param[i], param[i]);
        const float gi = grad[i];
        m[i] = std::fma(hp.beta1, m[i], one_minus_b1 * gi);
        v[i] = std::fma(hp.beta2, v[i], (one_minus_b2 * gi) * gi);
        const float m_hat = m[i] / hp.bias_correction1;
        const float v_hat = v[i] / hp.bias_correction2;
        param[i] = p - hp.lr * (m_hat / (std::sqrt(v_hat) + hp.eps));
    }
}

void ema_scalar(float decay, float* ema, const float* param, std::size_t n) {
    const float rest = 1.0f - decay;
    for (std::size_t i = 0; i < n; ++i) ema[i] = std::fma(decay, ema[i], rest * param[i]);
}

}  // namespace

const KernelTable& scalar_table() {
    static const KernelTable t{Isa::Scalar, gemm_scalar, axpby_scalar, adamw_scalar, ema_scalar};
    return t;
}

}  // namespace vaerepa::kernels
