// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

// Joint training of the backbone and projector on cached latents:
// L_total = L_phi (velocity regression) + lambda * L_align.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "vaerepa/alignment.hpp"
#include "vaerepa/backbone.hpp"
#include "vaerepa/checkpoint.hpp"
#include "vaerepa/optim.hpp"
#include "vaerepa/rng.hpp"
#include "vaerepa/vae.hpp"

namespace vaerepa::trainer {

struct TrainConfig {
    backbone::BackboneConfig backbone;
    alignment::AlignmentConfig align;
    std::size_t proj_layers = 5;
    std::size_t proj_hidden = 0;  // 0: same as the backbone width
    double lr = 1e-4;
    double weight_decay = 0.0;
    std::size_t batch = 64;
    std::size_t iters = 20000;
    double ema_decay = 0.9999;
    std::uint64_t seed = 0;
    std::size_t log_every = 100;
    std::size_t ckpt_every = 0;  // 0: only the final checkpoint

    alignment::ProjectorConfig projector() const;
    void validate() const;
    void to_kv(KvConfig& kv) const;
    /// Reads the keys written by to_kv.
    static TrainConfig from_kv(const KvConfig& kv);
};

struct StepLosses {
    float phi = 0, align = 0, total = 0;
};

/// Everything one step consumes, in token layout [B * T, C p^2].
template <typename T>
struct StepInputs {
    Tensor<T> y, v_target, z;
    std::vector<double> t;
    std::vector<std::size_t> labels;  // after label dropout
    std::vector<T> mask;              // 1 where t lies in the alignment range
};

/// Draws t ~ U[0, 1), label dropout and eps for a batch z [B, C, H, W], in
/// that order, from `rng`.
template <typename T>
StepInputs<T> make_step_inputs(const backbone::BackboneConfig& bcfg, const alignment::AlignmentConfig& acfg,
                               std::span<const T> z, std::span<const std::size_t> labels, Philox& rng);

template <typename T>
struct ObjectiveVars {
    ad::Var phi, align, total;
};

/// Records the full objective on `g`, binding the trainable stores.
template <typename T>
ObjectiveVars<T> build_objective(ad::Graph<T>& g, backbone::Backbone<T>& model, alignment::Projector<T>& proj,
                                 const alignment::AlignmentConfig& acfg, const StepInputs<T>& in);

class Trainer {
public:
    /// Fails before any step if the cache does not match the latent shape.
    Trainer(TrainConfig cfg, const vae::FeatureCache& cache);

    StepLosses step();
    std::uint64_t steps_done() const { return step_; }
    const std::vector<StepLosses>& history() const { return history_; }
    const TrainConfig& config() const { return cfg_; }

    backbone::Backbone<float>& model() { return model_; }
    const ad::ParamStore<float>& ema() const { return ema_; }
    alignment::Projector<float>& projector() { return proj_; }
    /// Fresh backbone holding a copy of the EMA weights.
    backbone::Backbone<float> ema_model() const;

    Checkpoint checkpoint() const;
    void save(const std::filesystem::path& path) const;
    /// Restores weights, EMA, optimizer moments, step and history.
    void restore(const Checkpoint& ck);

private:
    TrainConfig cfg_;
    const vae::FeatureCache& cache_;
    backbone::Backbone<float> model_;
    alignment::Projector<float> proj_;
    ad::ParamStore<float> ema_;
    AdamW opt_model_, opt_proj_;
    EpochSampler sampler_;
    std::uint64_t step_ = 0;
    std::vector<StepLosses> history_;
};

/// Backbone carrying the EMA (or raw) weights stored in a training checkpoint.
backbone::Backbone<float> load_backbone(const Checkpoint& ck, bool use_ema = true);

using ProgressFn = std::function<void(std::uint64_t step, const StepLosses&)>;

struct RunOptions {
    std::filesystem::path out_dir;      // loss.csv, checkpoints/, final.vrck
    std::filesystem::path resume_from;  // optional checkpoint
    ProgressFn progress;
};

struct RunResult {
    std::vector<StepLosses> history;
    double seconds_per_step = 0.0;
    std::filesystem::path final_checkpoint;
};

RunResult run(const TrainConfig& cfg, const vae::FeatureCache& cache, const RunOptions& opt);

/// step,l_phi,l_align,l_total with a header row.
void write_loss_csv(const std::filesystem::path& path, std::span<const StepLosses> history);

/// Moving average of L_phi over `window` steps ending at `step` (1-based count).
double smoothed_phi(std::span<const StepLosses> history, std::size_t step, std::size_t window);

}  // namespace vaerepa::trainer
