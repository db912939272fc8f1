// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

// Ablation sweeps over the alignment settings. Axis spec syntax:
//   depth:2,3,4;range:0-1,0.5-1;objective:smooth_l1,cosine;lambda:0,1;mlp:2,5
// Each run trains from scratch, samples with its EMA weights and scores
// toy-FID against a reference feature cache.

#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "vaerepa/sampler.hpp"
#include "vaerepa/trainer.hpp"

namespace vaerepa::trainer {

struct AblationAxis {
    std::string name;  // depth | range | objective | lambda | mlp
    std::vector<std::string> values;
};

/// Empty or blank spec yields no axes.
std::vector<AblationAxis> parse_axes(std::string_view spec);

/// Single varies one axis at a time around the base; Grid takes the full product.
enum class AblateMode { Single, Grid };
AblateMode parse_ablate_mode(std::string_view s);

/// Applies one axis setting to `cfg`; throws ErrorKind::Config on a bad value.
void apply_axis(TrainConfig& cfg, std::string_view name, std::string_view value);

struct AblationRun {
    std::string axis, value;  // "base" / "-" for the base configuration
    std::vector<std::pair<std::string, std::string>> settings;
};

std::vector<AblationRun> expand_axes(const std::vector<AblationAxis>& axes, AblateMode mode);

struct AblationRow {
    std::size_t run = 0;
    std::string axis, value;
    TrainConfig cfg;
    StepLosses final_losses;
    double toy_fid = 0.0;
    bool ok = false;
    std::string message;
};

struct AblationOptions {
    sampler::SampleConfig sample;  // labels/count/steps for the toy-FID samples
    std::function<void(const AblationRow&)> on_row;
};

/// Runs are seeded derive_seed(base.seed, run index). A failing run is
/// recorded with ok = false and the sweep continues.
std::vector<AblationRow> ablate(const TrainConfig& base, const std::vector<AblationAxis>& axes, AblateMode mode,
                                const vae::FeatureCache& train, const vae::FeatureCache& reference,
                                const AblationOptions& opt);

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);

}  // namespace vaerepa::trainer
