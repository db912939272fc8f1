// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

// Small diffusion transformer over VAE latents. Latents are cut into p x p
// patches (one token each), conditioned on time and class through adaptive
// layer norm, and mapped back to a per-patch velocity.
//
// Token layout: row b * T + (i * W/p + j) holds patch (i, j) of sample b,
// flattened channel-major as (c, di, dj).

#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "vaerepa/ad/graph.hpp"
#include "vaerepa/kv_config.hpp"
#include "vaerepa/tensor.hpp"

namespace vaerepa::backbone {

struct BackboneConfig {
    std::size_t channels = 4, height = 8, width = 8;
    std::size_t patch = 2;
    std::size_t depth = 6;
    std::size_t dim = 256;
    std::size_t heads = 4;
    std::size_t classes = 8;
    std::size_t time_freq_dim = 256;
    double label_dropout = 0.1;
    std::uint64_t seed = 0;

    std::size_t grid_h() const { return height / patch; }
    std::size_t grid_w() const { return width / patch; }
    std::size_t tokens() const { return grid_h() * grid_w(); }
    std::size_t token_dim() const { return channels * patch * patch; }
    std::size_t latent_size() const { return channels * height * width; }
    /// Label index standing for "no class" (classifier-free guidance).
    std::size_t null_label() const { return classes; }

    void validate() const;
    void validate_tap(std::size_t depth_k) const;
    void to_kv(KvConfig& kv) const;
    static BackboneConfig from_kv(const KvConfig& kv);
};

/// Closed-form parameter count of the model Backbone(cfg) builds.
std::size_t count_params(const BackboneConfig& cfg);

/// [B, C, H, W] -> [B * T, C * p * p].
template <typename T>
Tensor<T> patchify(std::span<const T> x, std::size_t batch, std::size_t c, std::size_t h, std::size_t w,
                   std::size_t p);
/// Inverse of patchify.
template <typename T>
Tensor<T> unpatchify(std::span<const T> tokens, std::size_t batch, std::size_t c, std::size_t h, std::size_t w,
                     std::size_t p);

/// Sinusoidal features of 1000 * t: [cos(f_i s), sin(f_i s)], f_i = 10000^(-i / half).
template <typename T>
Tensor<T> timestep_embedding(std::span<const double> t, std::size_t dim);

/// Fixed 2-D sin-cos token positions, [gh * gw, dim]; dim must be a multiple of 4.
template <typename T>
Tensor<T> pos_embed_2d(std::size_t dim, std::size_t gh, std::size_t gw);

template <typename T>
class Backbone {
public:
    struct GraphOutput {
        ad::Var velocity;                   // [B * T, C p^2]
        std::map<std::size_t, ad::Var> hidden;  // tap depth -> [B * T, D]
    };
    struct Output {
        Tensor<T> velocity;                       // [B, C, H, W]
        std::map<std::size_t, Tensor<T>> hidden;  // tap depth -> [B * T, D]
    };

    explicit Backbone(BackboneConfig cfg);

    const BackboneConfig& config() const { return cfg_; }
    ad::ParamStore<T>& params() { return params_; }
    const ad::ParamStore<T>& params() const { return params_; }

    /// `tokens` is a patchified batch [B * T, C p^2]; labels may hold
    /// null_label(). Hidden taps are the residual stream after block k (1-based).
    GraphOutput forward_graph(const ad::Binder<T>& bind, ad::Var tokens, std::span<const double> t,
                              std::span<const std::size_t> labels, const std::set<std::size_t>& taps = {}) const;

    /// Inference on y [B, C, H, W].
    Output forward(const Tensor<T>& y, std::span<const double> t, std::span<const std::size_t> labels,
                   const std::set<std::size_t>& taps = {}) const;

private:
    void add_linear(const std::string& name, std::size_t in, std::size_t out, std::uint64_t seed);

    BackboneConfig cfg_;
    ad::ParamStore<T> params_;
    Tensor<T> pos_;
};

}  // namespace vaerepa::backbone
