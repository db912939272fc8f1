// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

// Projector head and alignment objectives between projected backbone tokens
// and the clean VAE latent of the same sample. Both sides are compared in
// token layout [B * T, C p^2] (see backbone.hpp), which is the patchified
// form of the [C, H, W] latent.

#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "vaerepa/ad/graph.hpp"
#include "vaerepa/kv_config.hpp"
#include "vaerepa/tensor.hpp"

namespace vaerepa::alignment {

enum class Objective { SmoothL1, L1, L2, Cosine };

std::string_view objective_name(Objective o);
/// Accepts smooth_l1 | l1 | l2 | cosine.
Objective parse_objective(std::string_view s);

inline constexpr double kCosineEps = 1e-8;

struct ProjectorConfig {
    std::size_t in_dim = 256;
    std::size_t hidden = 256;
    std::size_t layers = 5;
    std::size_t out_dim = 16;
    std::uint64_t seed = 0;

    void validate() const;
    std::size_t weight_count() const;  // dense weights only
    std::size_t param_count() const;   // weights + biases
};

struct AlignmentConfig {
    Objective objective = Objective::SmoothL1;
    double beta = 0.05;
    double lambda = 1.0;
    std::size_t depth = 2;
    double t_lo = 0.0, t_hi = 1.0;

    void validate() const;
    bool in_range(double t) const { return t >= t_lo && t <= t_hi; }
};

/// Huber form: d^2 / (2 beta) for |d| <= beta, |d| - beta / 2 beyond.
inline double smooth_l1(double d, double beta) {
    const double a = d < 0 ? -d : d;
    return a <= beta ? d * d / (2.0 * beta) : a - beta / 2.0;
}
inline double smooth_l1_grad(double d, double beta) {
    if (d > beta) return 1.0;
    if (d < -beta) return -1.0;
    return d / beta;
}

/// Per-token MLP D -> hidden -> ... -> out with SiLU between layers.
template <typename T>
class Projector {
public:
    explicit Projector(ProjectorConfig cfg);

    const ProjectorConfig& config() const { return cfg_; }
    ad::ParamStore<T>& params() { return params_; }
    const ad::ParamStore<T>& params() const { return params_; }

    ad::Var forward_graph(const ad::Binder<T>& bind, ad::Var hidden) const;
    /// hidden [N, D] -> [N, out].
    Tensor<T> forward(const Tensor<T>& hidden) const;

private:
    ProjectorConfig cfg_;
    ad::ParamStore<T> params_;
};

/// Projects the token features of one sample [T, D] and unpatchifies to [C, H, W].
template <typename T>
Tensor<T> project(const Projector<T>& proj, const Tensor<T>& hidden, std::size_t c, std::size_t h, std::size_t w,
                  std::size_t p);

/// Loss of one sample given [C, H, W] arrays. Cosine compares the C p^2
/// token vectors obtained by patchifying with `patch`.
double align_loss(const AlignmentConfig& cfg, const Tensor<double>& f_sit, const Tensor<double>& f_vae,
                  std::size_t patch);

/// Batched graph form. pred and target are [B * tokens, M]; each sample's
/// loss (mean over its elements, or over its tokens for Cosine) is weighted
/// by mask[b] in {0, 1} and the sum divided by max(1, sum(mask)).
template <typename T>
ad::Var align_loss_graph(ad::Graph<T>& g, const AlignmentConfig& cfg, ad::Var pred, const Tensor<T>& target,
                         std::size_t tokens, std::span<const T> mask);

}  // namespace vaerepa::alignment
