// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

// Fréchet distance between Gaussian moment fits in VAE-latent space, PCA
// false-colour views of feature maps, and analytic FLOP accounting.

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vaerepa/alignment.hpp"
#include "vaerepa/backbone.hpp"
#include "vaerepa/image_io.hpp"
#include "vaerepa/kv_config.hpp"
#include "vaerepa/tensor.hpp"

namespace vaerepa::eval {

struct Moments {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;  // unbiased (n - 1) normalisation
};

/// Rows of `x` are samples. Requires at least dim + 1 rows.
Moments moments(const Eigen::MatrixXd& x);

/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)). Eigenvalues above
/// -kPsdTolerance are clamped to 0; anything more negative is an error.
double frechet_distance(const Moments& a, const Moments& b);
double toy_fid(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

inline constexpr double kPsdTolerance = 1e-6;

/// View of `n` rows of `d` floats as a sample matrix.
Eigen::MatrixXd as_matrix(std::span<const float> data, std::size_t n, std::size_t d);
Eigen::MatrixXd as_matrix(std::span<const double> data, std::size_t n, std::size_t d);

/// Token features [gh * gw, D] -> feature map [D, gh, gw].
Tensor<float> token_map(const Tensor<float>& tokens, std::size_t gh, std::size_t gw);

struct PcaResult {
    std::vector<RgbImage> images;
    std::vector<std::string> warnings;
};

/// One PCA fitted over every spatial position of every map; components 1-3
/// become R, G, B after a shared min-max stretch. Each component's sign makes
/// its largest-magnitude loading positive. All maps share the channel count.
PcaResult pca_viz(const std::vector<Tensor<float>>& maps);

struct FlopReport {
    // Multiply-accumulates per sample.
    std::uint64_t patch_embed = 0, time_embed = 0, adaln = 0, qkv = 0, attention = 0, attn_proj = 0, mlp = 0,
                  final_layer = 0, projector = 0;
    std::size_t batch = 1;
    std::uint64_t backbone_params = 0, projector_params = 0, external_params = 0;

    std::uint64_t backbone_macs() const {
        return patch_embed + time_embed + adaln + qkv + attention + attn_proj + mlp + final_layer;
    }
    /// FLOPs for the whole batch (2 per multiply-accumulate).
    std::uint64_t backbone_flops() const { return 2 * backbone_macs() * batch; }
    std::uint64_t projector_flops() const { return 2 * projector * batch; }
    std::uint64_t attention_flops() const { return 2 * attention * batch; }
    std::uint64_t total_flops() const { return backbone_flops() + projector_flops(); }
    double overhead() const { return double(projector) / double(backbone_macs()); }
};

FlopReport flop_report(const backbone::BackboneConfig& b, const alignment::ProjectorConfig& p, std::size_t batch);

struct MetricsReport {
    double toy_fid = 0.0;
    std::size_t sample_count = 0, reference_count = 0, feature_dim = 0;
    FlopReport flops;
    double seconds_per_step = 0.0;  // 0 when unknown

    KvConfig to_kv() const;
};

}  // namespace vaerepa::eval
