// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

#include "vaerepa/sampler.hpp"

#include <cmath>

#include "vaerepa/interpolant.hpp"
#include "vaerepa/rng.hpp"

namespace vaerepa::sampler {

namespace {

constexpr std::uint64_t kTagInit = 0x53494E49;   // "SINI"
constexpr std::uint64_t kTagNoise = 0x534E4F49;  // "SNOI"

}  // namespace

std::string_view solver_name(Solver s) { return s == Solver::OdeEuler ? "ode" : "sde"; }

Solver parse_solver(std::string_view s) {
    if (s == "ode") return Solver::OdeEuler;
    if (s == "sde") return Solver::SdeEulerMaruyama;
    fail(ErrorKind::Config, "unknown solver `{}` (expected ode or sde)", s);
}

void SampleConfig::validate() const {
    require(steps >= 1, ErrorKind::Config, "sampling needs at least one step");
    require(t_min > 0.0 && t_min < 1.0, ErrorKind::Config, "t_min {} must lie in (0, 1)", t_min);
    require(cfg_scale >= 1.0 || cfg_scale == 0.0, ErrorKind::Config,
            "guidance scale {} must be >= 1 (or exactly 0 for unconditional)", cfg_scale);
    require(diffusion_scale >= 0.0, ErrorKind::Config, "diffusion_scale must be non-negative");
    require(count >= 1, ErrorKind::Config, "sample count must be >= 1");
}

Tensor<float> guided_velocity(const backbone::Backbone<float>& model, const Tensor<float>& y, double t,
                              std::span<const std::size_t> labels, double w) {
    const std::size_t b = labels.size();
    std::vector<double> ts(b, t);
    if (w == 1.0) return model.forward(y, ts, labels).velocity;

    Shape s2 = y.shape();
    s2[0] = 2 * b;
    Tensor<float> y2(s2);
    std::copy(y.span().begin(), y.span().end(), y2.data());
    std::copy(y.span().begin(), y.span().end(), y2.data() + y.size());
    std::vector<std::size_t> l2(labels.begin(), labels.end());
    l2.resize(2 * b, model.config().null_label());
    ts.resize(2 * b, t);
    const Tensor<float> v2 = model.forward(y2, ts, l2).velocity;

    Tensor<float> out(y.shape());
    const float wf = static_cast<float>(w);
    const float* vl = v2.data();
    const float* vn = v2.data() + y.size();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = vn[i] + wf * (vl[i] - vn[i]);
    return out;
}

void NetworkField::eval(std::span<const double> y, double t, std::span<const std::size_t> labels,
                        std::span<double> out) const {
    const auto& c = model_.config();
    Tensor<float> yf({labels.size(), c.channels, c.height, c.width});
    require(y.size() == yf.size() && out.size() == yf.size(), ErrorKind::Shape, "velocity field size mismatch");
    for (std::size_t i = 0; i < y.size(); ++i) yf[i] = static_cast<float>(y[i]);
    const Tensor<float> v = guided_velocity(model_, yf, t, labels, w_);
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i];
}

GaussianOracle::GaussianOracle(std::vector<double> mu, double sigma2) : mu_(std::move(mu)), sigma2_(sigma2) {
    require(!mu_.empty() && sigma2 > 0.0, ErrorKind::Config, "oracle needs a non-empty mean and positive variance");
}

// With y = (1 - t) z + t eps, z ~ N(mu, s2), eps ~ N(0, 1) per coordinate:
// y ~ N((1 - t) mu, (1 - t)^2 s2 + t^2), r = y - (1 - t) mu,
// E[z | y] = mu + (1 - t) s2 r / var, E[eps | y] = t r / var.
void GaussianOracle::eval(std::span<const double> y, double t, std::span<const std::size_t>,
                          std::span<double> out) const {
    const std::size_t d = mu_.size();
    const double a = 1.0 - t;
    const double var = a * a * sigma2_ + t * t;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double m = mu_[i % d];
        const double r = y[i] - a * m;
        const double ez = m + a * sigma2_ * r / var;
        const double ee = t * r / var;
        out[i] = ee - ez;
    }
}

void GaussianOracle::score(std::span<const double> y, double t, std::span<double> out) const {
    const std::size_t d = mu_.size();
    const double a = 1.0 - t;
    const double var = a * a * sigma2_ + t * t;
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = -(y[i] - a * mu_[i % d]) / var;
}

std::vector<std::size_t> resolve_labels(const SampleConfig& cfg, std::size_t classes, std::size_t null_label) {
    std::vector<std::size_t> out(cfg.count);
    for (std::size_t i = 0; i < cfg.count; ++i) {
        if (cfg.labels.empty()) {
            out[i] = i % classes;
            continue;
        }
        const std::int64_t l = cfg.labels[i % cfg.labels.size()];
        require(l == kNullLabel || (l >= 0 && std::size_t(l) < classes), ErrorKind::Config,
                "sample label {} outside [0, {}) (use -1 for unconditional)", l, classes);
        out[i] = l == kNullLabel ? null_label : std::size_t(l);
    }
    return out;
}

Tensor<double> sample(const VelocityField& field, const SampleConfig& cfg, std::span<const std::size_t> labels,
                      const StepObserver& observer, std::size_t chunk) {
    cfg.validate();
    require(labels.size() == cfg.count, ErrorKind::Shape, "{} labels for {} chains", labels.size(), cfg.count);
    require(chunk >= 1, ErrorKind::Config, "chunk must be >= 1");
    const std::size_t d = field.dim();
    const interpolant::Schedule sched;
    const auto grid = [&](std::size_t k) { return 1.0 - double(k) * (1.0 - cfg.t_min) / double(cfg.steps); };
    const bool sde = cfg.solver == Solver::SdeEulerMaruyama;

    Tensor<double> result({cfg.count, d});
    for (std::size_t c0 = 0; c0 < cfg.count; c0 += chunk) {
        const std::size_t n = std::min(chunk, cfg.count - c0);
        std::span<double> y = result.span().subspan(c0 * d, n * d);
        const auto lab = labels.subspan(c0, n);
        std::vector<Philox> noise;
        for (std::size_t i = 0; i < n; ++i) {
            Philox init(derive_seed(cfg.seed, kTagInit), c0 + i);
            for (std::size_t j = 0; j < d; ++j) y[i * d + j] = init.normal();
            noise.emplace_back(derive_seed(cfg.seed, kTagNoise), c0 + i);
        }
        std::vector<double> v(n * d), s(n * d);
        for (std::size_t k = 0; k < cfg.steps; ++k) {
            const double t = grid(k), dt = t - grid(k + 1);
            field.eval(y, t, lab, v);
            if (observer) observer(k, t, y, v);
            const bool stochastic = sde && k + 1 < cfg.steps;
            if (!stochastic) {
                for (std::size_t i = 0; i < y.size(); ++i) y[i] = y[i] - dt * v[i];
            } else {
                interpolant::velocity_to_score_into<double>(y, v, t, sched, s);
                const double g2 = cfg.diffusion_scale * 2.0 * sched.eval(t).b;
                const double half_g2 = 0.5 * g2, amp = std::sqrt(g2 * dt);
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < d; ++j) {
                        const std::size_t q = i * d + j;
                        const double drift = v[q] - half_g2 * s[q];
                        y[q] = y[q] - dt * drift + amp * noise[i].normal();
                    }
                }
            }
            for (double yi : y)
                require(std::isfinite(yi), ErrorKind::Numeric, "sampler state became non-finite at step {} (t = {})",
                        k, t);
        }
    }
    return result;
}

Tensor<double> sample_ode(const VelocityField& field, SampleConfig cfg, std::span<const std::size_t> labels) {
    cfg.solver = Solver::OdeEuler;
    return sample(field, cfg, labels);
}

Tensor<double> sample_sde(const VelocityField& field, SampleConfig cfg, std::span<const std::size_t> labels) {
    cfg.solver = Solver::SdeEulerMaruyama;
    return sample(field, cfg, labels);
}

}  // namespace vaerepa::sampler
