// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

// Small convolutional VAE used as the latent first stage, plus the offline
// feature cache whose latents are both the diffusion inputs and the
// alignment targets.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "vaerepa/ad/graph.hpp"
#include "vaerepa/data.hpp"
#include "vaerepa/kv_config.hpp"
#include "vaerepa/tensor.hpp"

namespace vaerepa::vae {

struct VaeConfig {
    std::size_t in_channels = 3;
    std::size_t latent_channels = 4;
    std::size_t downsample = 4;
    /// Channel width at each resolution, one entry per downsampling stage.
    std::vector<std::size_t> widths{32, 64};
    double kl_weight = 1e-6;
    std::size_t steps = 3000;
    std::size_t batch = 16;
    double lr = 1e-3;
    std::uint64_t seed = 0;

    std::size_t stages() const;
    /// Power-of-two factor, one width per stage, image size divisible.
    void validate(std::size_t image_size) const;
    void to_kv(KvConfig& kv) const;
    static VaeConfig from_kv(const KvConfig& kv);
};

class Vae {
public:
    struct Posterior {
        ad::Var mean, logvar;
    };

    explicit Vae(VaeConfig cfg);

    const VaeConfig& config() const { return cfg_; }
    ad::ParamStore<float>& params() { return params_; }
    const ad::ParamStore<float>& params() const { return params_; }

    /// Multiplier applied to posterior means; 1 / (dataset latent std).
    float scale() const { return scale_; }
    void set_scale(float s);

    Posterior encode_graph(const ad::Binder<float>& bind, ad::Var images) const;
    ad::Var decode_graph(const ad::Binder<float>& bind, ad::Var latents) const;

    /// Scaled posterior means of images[B,3,S,S] -> [B,C,S/d,S/d].
    Tensor<float> encode_batch(const Tensor<float>& images) const;
    Tensor<float> encode(const Tensor<float>& image) const;
    /// Scaled latents [B,C,h,w] -> images clamped to [-1, 1].
    Tensor<float> decode_batch(const Tensor<float>& latents) const;
    Tensor<float> decode(const Tensor<float>& latent) const;

    void save(const std::filesystem::path& path) const;
    static Vae load(const std::filesystem::path& path);

private:
    ad::Var res_block(const ad::Binder<float>& bind, const std::string& prefix, ad::Var x) const;
    void add_conv(const std::string& name, std::size_t cin, std::size_t cout, std::size_t k, std::uint64_t seed);
    void add_res(const std::string& prefix, std::size_t width, std::uint64_t seed);

    VaeConfig cfg_;
    ad::ParamStore<float> params_;
    float scale_ = 1.0f;
};

struct VaeTrainReport {
    std::vector<double> losses;  // per-step reconstruction + weighted KL
};

using ProgressFn = std::function<void(std::size_t step, double loss)>;

/// Adam on MSE reconstruction + kl_weight * KL, with reparameterized
/// posterior draws. Sets the cache scale from the training set's posterior
/// means. Throws ErrorKind::Numeric naming the step on a non-finite loss.
Vae train_vae(const VaeConfig& cfg, const data::Dataset& train, VaeTrainReport* report = nullptr,
              const ProgressFn& progress = {});

/// 1 / std of all posterior-mean elements over `ds` (unscaled).
float compute_scale(const Vae& vae, const data::Dataset& ds);

/// Peak signal-to-noise ratio in dB for signals in [-1, 1] (peak-to-peak 2).
double psnr(std::span<const float> a, std::span<const float> b);

/// Mean PSNR of decode(encode(x)) over a dataset.
double reconstruction_psnr(const Vae& vae, const data::Dataset& ds);

// Feature cache, bit-exact little-endian layout:
//   "VRFC", u32 version = 1, u32 count, u32 C, u32 H, u32 W, f32 scale,
//   then per record: u64 id, u16 label, f32 latent[C*H*W].
// Header is 28 bytes; each record is 10 + 4*C*H*W bytes.
struct FeatureCache {
    static constexpr std::uint32_t kVersion = 1;
    static constexpr std::size_t kHeaderBytes = 28;

    std::size_t channels = 0, height = 0, width = 0;
    float scale = 1.0f;
    std::vector<std::uint64_t> ids;
    std::vector<std::uint16_t> labels;
    std::vector<float> latents;  // count * C * H * W

    std::size_t count() const { return ids.size(); }
    std::size_t latent_size() const { return channels * height * width; }
    Shape latent_shape() const { return {channels, height, width}; }
    std::span<const float> latent(std::size_t i) const {
        return std::span<const float>(latents).subspan(i * latent_size(), latent_size());
    }
    std::size_t record_bytes() const { return 8 + 2 + 4 * latent_size(); }
    std::size_t file_bytes() const { return kHeaderBytes + count() * record_bytes(); }

    void write(const std::filesystem::path& path) const;
    static FeatureCache read(const std::filesystem::path& path);
};

FeatureCache extract_features(const Vae& vae, const data::Dataset& ds, const std::filesystem::path& out);

}  // namespace vaerepa::vae
