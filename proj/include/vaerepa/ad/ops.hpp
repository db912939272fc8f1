// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

// Differentiable operations on Graph nodes. Row-major layouts throughout:
// token matrices are [rows, features], images are [batch, channels, H, W].

#pragma once

#include <cstdint>
#include <span>

#include "vaerepa/ad/graph.hpp"

namespace vaerepa::ad {

/// y[N,out] = x[N,in] * w[in,out] (+ b[out]). `b` may be an invalid Var.
template <typename T>
Var linear(Graph<T>& g, Var x, Var w, Var b);

template <typename T>
Var add(Graph<T>& g, Var a, Var b);

/// a + b where b is repeated to cover a (b.size() divides a.size()).
template <typename T>
Var add_tiled(Graph<T>& g, Var a, Var b);

template <typename T>
Var scale(Graph<T>& g, Var a, T s);

template <typename T>
Var silu(Graph<T>& g, Var x);

/// GELU, tanh approximation.
template <typename T>
Var gelu(Graph<T>& g, Var x);

/// Normalizes each row of x[N,D] to zero mean / unit variance, no affine.
template <typename T>
Var layer_norm(Graph<T>& g, Var x, T eps = T(1e-6));

/// x[N,D] * (1 + scale[B,D]) + shift[B,D], with N = B * group_rows.
template <typename T>
Var modulate(Graph<T>& g, Var x, Var shift, Var scale, std::size_t group_rows);

/// x[N,D] + gate[B,D] * y[N,D], with N = B * group_rows.
template <typename T>
Var gated_add(Graph<T>& g, Var x, Var y, Var gate, std::size_t group_rows);

/// Columns [c0, c1) of x[N,M].
template <typename T>
Var slice_cols(Graph<T>& g, Var x, std::size_t c0, std::size_t c1);

/// Multi-head softmax attention. qkv[B*T, 3D] holds q | k | v column blocks;
/// returns [B*T, D].
template <typename T>
Var attention(Graph<T>& g, Var qkv, std::size_t batch, std::size_t tokens, std::size_t heads);

/// Rows `index` of table[V,D] -> [index.size(), D].
template <typename T>
Var embedding(Graph<T>& g, Var table, std::span<const std::size_t> index);

/// 2-D convolution. x[B,Ci,H,W], w[Co,Ci,K,K], b[Co] -> [B,Co,Ho,Wo].
template <typename T>
Var conv2d(Graph<T>& g, Var x, Var w, Var b, std::size_t stride, std::size_t pad);

/// Nearest-neighbour 2x upsampling of [B,C,H,W].
template <typename T>
Var upsample2x(Graph<T>& g, Var x);

/// Channels [c0, c1) of x[B,C,H,W].
template <typename T>
Var slice_channels(Graph<T>& g, Var x, std::size_t c0, std::size_t c1);

/// mean + exp(logvar / 2) * noise (reparameterized diagonal Gaussian draw).
template <typename T>
Var gaussian_sample(Graph<T>& g, Var mean, Var logvar, const Tensor<T>& noise);

/// KL(N(mean, exp(logvar)) || N(0, I)) summed over elements of each sample,
/// averaged over the leading (batch) dimension.
template <typename T>
Var kl_standard_normal(Graph<T>& g, Var mean, Var logvar);

/// Mean over all elements of (pred - target)^2; target carries no gradient.
template <typename T>
Var mse(Graph<T>& g, Var pred, const Tensor<T>& target);

}  // namespace vaerepa::ad
