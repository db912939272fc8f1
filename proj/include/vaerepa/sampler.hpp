// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

// Reverse-time integration from noise at t = 1 down to t_min.
//
// Both solvers use `steps` uniform intervals t_k = 1 - k (1 - t_min) / steps.
// The ODE takes Euler steps along the velocity. The SDE takes
// Euler-Maruyama steps of
//     y <- y - dt (v - g2 / 2 * s) + sqrt(g2 dt) xi,   g2 = scale * 2 b(t),
// with s the score recovered from v; its last interval is a plain velocity
// step so the score is never evaluated near t = 0.

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "vaerepa/backbone.hpp"
#include "vaerepa/tensor.hpp"

namespace vaerepa::sampler {

enum class Solver { OdeEuler, SdeEulerMaruyama };

std::string_view solver_name(Solver s);
/// Accepts ode | sde.
Solver parse_solver(std::string_view s);

inline constexpr std::int64_t kNullLabel = -1;

struct SampleConfig {
    Solver solver = Solver::SdeEulerMaruyama;
    std::size_t steps = 250;
    /// Guidance scale; 1 disables guidance, 0 gives the unconditional field.
    double cfg_scale = 1.0;
    /// Chain i uses labels[i % size]; kNullLabel means unconditional. Empty
    /// cycles through all classes.
    std::vector<std::int64_t> labels;
    double t_min = 0.004;
    std::uint64_t seed = 0;
    std::size_t count = 1000;
    /// Multiplier on the SDE diffusion coefficient; 0 reduces the SDE to the ODE.
    double diffusion_scale = 1.0;

    void validate() const;
};

/// Batched velocity field over flattened states y[n, dim].
class VelocityField {
public:
    virtual ~VelocityField() = default;
    virtual std::size_t dim() const = 0;
    virtual void eval(std::span<const double> y, double t, std::span<const std::size_t> labels,
                      std::span<double> out) const = 0;
};

/// v_null + w (v_label - v_null) from a backbone; w == 1 evaluates only the
/// conditional branch. y is [B, C, H, W].
Tensor<float> guided_velocity(const backbone::Backbone<float>& model, const Tensor<float>& y, double t,
                              std::span<const std::size_t> labels, double w);

class NetworkField final : public VelocityField {
public:
    NetworkField(const backbone::Backbone<float>& model, double cfg_scale) : model_(model), w_(cfg_scale) {}
    std::size_t dim() const override { return model_.config().latent_size(); }
    void eval(std::span<const double> y, double t, std::span<const std::size_t> labels,
              std::span<double> out) const override;

private:
    const backbone::Backbone<float>& model_;
    double w_;
};

/// Exact velocity and score of the linear interpolant for data N(mu, sigma2 I).
class GaussianOracle final : public VelocityField {
public:
    GaussianOracle(std::vector<double> mu, double sigma2);
    std::size_t dim() const override { return mu_.size(); }
    void eval(std::span<const double> y, double t, std::span<const std::size_t> labels,
              std::span<double> out) const override;
    void score(std::span<const double> y, double t, std::span<double> out) const;

    const std::vector<double>& mean() const { return mu_; }
    double variance() const { return sigma2_; }

private:
    std::vector<double> mu_;
    double sigma2_;
};

/// Per-chain class indices; kNullLabel maps to `null_label`.
std::vector<std::size_t> resolve_labels(const SampleConfig& cfg, std::size_t classes, std::size_t null_label);

/// Called after the field is evaluated at grid point k (time t) for a chunk of chains.
using StepObserver = std::function<void(std::size_t k, double t, std::span<const double> y,
                                        std::span<const double> v)>;

/// Returns [count, dim] final states. Chains draw their initial noise and
/// SDE increments from independent per-chain streams, so results do not
/// depend on `chunk`.
Tensor<double> sample(const VelocityField& field, const SampleConfig& cfg, std::span<const std::size_t> labels,
                      const StepObserver& observer = {}, std::size_t chunk = 256);

Tensor<double> sample_ode(const VelocityField& field, SampleConfig cfg, std::span<const std::size_t> labels);
Tensor<double> sample_sde(const VelocityField& field, SampleConfig cfg, std::span<const std::size_t> labels);

}  // namespace vaerepa::sampler
