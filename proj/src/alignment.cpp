// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

#include "vaerepa/alignment.hpp"

#include <cmath>

#include "vaerepa/ad/ops.hpp"
#include "vaerepa/backbone.hpp"
#include "vaerepa/optim.hpp"
#include "vaerepa/rng.hpp"

namespace vaerepa::alignment {

using ad::Var;

std::string_view objective_name(Objective o) {
    switch (o) {
        case Objective::SmoothL1: return "smooth_l1";
        case Objective::L1: return "l1";
        case Objective::L2: return "l2";
        case Objective::Cosine: return "cosine";
    }
    return "?";
}

Objective parse_objective(std::string_view s) {
    if (s == "smooth_l1") return Objective::SmoothL1;
    if (s == "l1") return Objective::L1;
    if (s == "l2") return Objective::L2;
    if (s == "cosine") return Objective::Cosine;
    fail(ErrorKind::Config, "unknown alignment objective `{}` (expected smooth_l1, l1, l2 or cosine)", s);
}

void ProjectorConfig::validate() const {
    require(layers >= 2, ErrorKind::Config, "projector needs at least 2 layers, got {}", layers);
    require(in_dim >= 1 && hidden >= 1 && out_dim >= 1, ErrorKind::Config, "projector widths must be positive");
}

std::size_t ProjectorConfig::weight_count() const {
    return in_dim * hidden + (layers - 2) * hidden * hidden + hidden * out_dim;
}

std::size_t ProjectorConfig::param_count() const { return weight_count() + (layers - 1) * hidden + out_dim; }

void AlignmentConfig::validate() const {
    require(beta > 0.0, ErrorKind::Config, "beta must be positive, got {}", beta);
    require(lambda >= 0.0, ErrorKind::Config, "lambda must be non-negative, got {}", lambda);
    require(t_lo >= 0.0 && t_lo < t_hi && t_hi <= 1.0, ErrorKind::Config,
            "timestep range [{}, {}] must satisfy 0 <= lo < hi <= 1", t_lo, t_hi);
}

template <typename T>
Projector<T>::Projector(ProjectorConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        const std::size_t in = l == 0 ? cfg_.in_dim : cfg_.hidden;
        const std::size_t out = l + 1 == cfg_.layers ? cfg_.out_dim : cfg_.hidden;
        Tensor<T> w({in, out});
        init::xavier_uniform(w, in, out, derive_seed(cfg_.seed, 0x50524F4A /* PROJ */, l));
        params_.add(fmt::format("l{}.w", l), std::move(w));
        params_.add(fmt::format("l{}.b", l), Tensor<T>({out}));
    }
}

template <typename T>
Var Projector<T>::forward_graph(const ad::Binder<T>& bind, Var hidden) const {
    auto& g = bind.graph();
    Var x = hidden;
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        if (l > 0) x = ad::silu(g, x);
        x = ad::linear(g, x, bind(fmt::format("l{}.w", l)), bind(fmt::format("l{}.b", l)));
    }
    return x;
}

template <typename T>
Tensor<T> Projector<T>::forward(const Tensor<T>& hidden) const {
    require(hidden.rank() == 2 && hidden.dim(1) == cfg_.in_dim, ErrorKind::Shape,
            "projector input has shape {}, expected [N,{}]", shape_str(hidden.shape()), cfg_.in_dim);
    ad::Graph<T> g(false);
    ad::Binder<T> bind(g, params_);
    return g.value(forward_graph(bind, g.constant(hidden)));
}

template <typename T>
Tensor<T> project(const Projector<T>& proj, const Tensor<T>& hidden, std::size_t c, std::size_t h, std::size_t w,
                  std::size_t p) {
    require(h % p == 0 && w % p == 0 && hidden.rank() == 2 && hidden.dim(0) == (h / p) * (w / p), ErrorKind::Shape,
            "project: {} tokens do not tile a {}x{} latent with patch {}", hidden.rank() ? hidden.dim(0) : 0, h, w,
            p);
    require(proj.config().out_dim == c * p * p, ErrorKind::Shape, "projector emits {} values per token, need {}",
            proj.config().out_dim, c * p * p);
    const Tensor<T> tok = proj.forward(hidden);
    Tensor<T> img = backbone::unpatchify<T>(tok.span(), 1, c, h, w, p);
    return std::move(img).reshaped({c, h, w});
}

double align_loss(const AlignmentConfig& cfg, const Tensor<double>& f_sit, const Tensor<double>& f_vae,
                  std::size_t patch) {
    require_same_shape(f_sit.shape(), f_vae.shape(), "align_loss");
    require(f_sit.all_finite() && f_vae.all_finite(), ErrorKind::Numeric, "align_loss: non-finite input");
    require(f_sit.size() > 0, ErrorKind::Shape, "align_loss: empty input");
    const std::size_t n = f_sit.size();
    double acc = 0.0;
    switch (cfg.objective) {
        case Objective::SmoothL1:
            require(cfg.beta > 0.0, ErrorKind::Config, "beta must be positive");
            for (std::size_t i = 0; i < n; ++i) acc += smooth_l1(f_sit[i] - f_vae[i], cfg.beta);
            return acc / double(n);
        case Objective::L1:
            for (std::size_t i = 0; i < n; ++i) acc += std::abs(f_sit[i] - f_vae[i]);
            return acc / double(n);
        case Objective::L2:
            for (std::size_t i = 0; i < n; ++i) acc += (f_sit[i] - f_vae[i]) * (f_sit[i] - f_vae[i]);
            return acc / double(n);
        case Objective::Cosine: {
            require(f_sit.rank() == 3, ErrorKind::Shape, "cosine alignment needs [C,H,W] inputs");
            const std::size_t c = f_sit.dim(0), h = f_sit.dim(1), w = f_sit.dim(2);
            const Tensor<double> a = backbone::patchify<double>(f_sit.span(), 1, c, h, w, patch);
            const Tensor<double> b = backbone::patchify<double>(f_vae.span(), 1, c, h, w, patch);
            const std::size_t tokens = a.dim(0), m = a.dim(1);
            for (std::size_t r = 0; r < tokens; ++r) {
                double dot = 0, na = 0, nb = 0;
                for (std::size_t j = 0; j < m; ++j) {
                    dot += a[r * m + j] * b[r * m + j];
                    na += a[r * m + j] * a[r * m + j];
                    nb += b[r * m + j] * b[r * m + j];
                }
                acc += 1.0 - dot / std::max(std::sqrt(na) * std::sqrt(nb), kCosineEps);
            }
            return acc / double(tokens);
        }
    }
    return 0.0;
}

template <typename T>
Var align_loss_graph(ad::Graph<T>& g, const AlignmentConfig& cfg, Var pred, const Tensor<T>& target,
                     std::size_t tokens, std::span<const T> mask) {
    const Tensor<T>& x = g.value(pred);
    require_same_shape(x.shape(), target.shape(), "align_loss");
    require(x.rank() == 2 && tokens >= 1 && x.dim(0) == mask.size() * tokens, ErrorKind::Shape,
            "align_loss: {} rows do not hold {} samples of {} tokens", x.rank() ? x.dim(0) : 0, mask.size(), tokens);
    const std::size_t batch = mask.size(), m = x.dim(1), per = tokens * m;
    T active = 0;
    for (T w : mask) active += w;
    const T denom = std::max(active, T(1));
    const T beta = T(cfg.beta);

    // Per-element derivative of the (unweighted) per-sample loss w.r.t. pred.
    std::vector<T> dpred(x.size(), T(0));
    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        if (mask[b] == T(0)) continue;
        const std::size_t o = b * per;
        T sample = 0;
        switch (cfg.objective) {
            case Objective::SmoothL1:
                for (std::size_t i = o; i < o + per; ++i) {
                    const T d = x[i] - target[i];
                    sample += T(smooth_l1(d, beta));
                    dpred[i] = T(smooth_l1_grad(d, beta)) / T(per);
                }
                sample /= T(per);
                break;
            case Objective::L1:
                for (std::size_t i = o; i < o + per; ++i) {
                    const T d = x[i] - target[i];
                    sample += std::abs(d);
                    dpred[i] = T((d > 0) - (d < 0)) / T(per);
                }
                sample /= T(per);
                break;
            case Objective::L2:
                for (std::size_t i = o; i < o + per; ++i) {
                    const T d = x[i] - target[i];
                    sample += d * d;
                    dpred[i] = T(2) * d / T(per);
                }
                sample /= T(per);
                break;
            case Objective::Cosine:
                for (std::size_t r = 0; r < tokens; ++r) {
                    const T* a = x.data() + o + r * m;
                    const T* v = target.data() + o + r * m;
                    T dot = 0, na2 = 0, nb2 = 0;
                    for (std::size_t j = 0; j < m; ++j) {
                        dot += a[j] * v[j];
                        na2 += a[j] * a[j];
                        nb2 += v[j] * v[j];
                    }
                    const T na = std::sqrt(na2), nb = std::sqrt(nb2);
                    const T den = na * nb;
                    T* gr = dpred.data() + o + r * m;
                    if (den > T(kCosineEps)) {
                        const T cs = dot / den;
                        sample += T(1) - cs;
                        // d(1 - cos)/da = -(v / (|a||v|) - cos * a / |a|^2)
                        for (std::size_t j = 0; j < m; ++j)
                            gr[j] = -(v[j] / den - cs * a[j] / na2) / T(tokens);
                    } else {
                        sample += T(1) - dot / T(kCosineEps);
                        for (std::size_t j = 0; j < m; ++j) gr[j] = -v[j] / T(kCosineEps) / T(tokens);
                    }
                }
                sample /= T(tokens);
                break;
        }
        total += double(mask[b] * sample);
    }
    Tensor<T> out({1}, T(total / double(denom)));
    require(std::isfinite(out[0]), ErrorKind::Numeric, "alignment loss is not finite");

    std::vector<T> weights(mask.begin(), mask.end());
    return g.record(std::move(out), {pred},
                    [pred, dpred = std::move(dpred), weights = std::move(weights), per, denom](ad::Graph<T>& gr,
                                                                                              int self) {
                        const T up = gr.grad_of(self)[0] / denom;
                        auto& gx = gr.grad(pred);
                        for (std::size_t b = 0; b < weights.size(); ++b) {
                            if (weights[b] == T(0)) continue;
                            const T s = up * weights[b];
                            for (std::size_t i = b * per; i < (b + 1) * per; ++i) gx[i] += s * dpred[i];
                        }
                    });
}

#define VAEREPA_INSTANTIATE(T)                                                                                 \
    template class Projector<T>;                                                                               \
    template Tensor<T> project<T>(const Projector<T>&, const Tensor<T>&, std::size_t, std::size_t, std::size_t, \
                                  std::size_t);                                                                \
    template Var align_loss_graph<T>(ad::Graph<T>&, const AlignmentConfig&, Var, const Tensor<T>&, std::size_t, \
                                     std::span<const T>);

VAEREPA_INSTANTIATE(float)
VAEREPA_INSTANTIATE(double)
#undef VAEREPA_INSTANTIATE

}  // namespace vaerepa::alignment
