// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

#include "vaerepa/backbone.hpp"

#include <cmath>
#include <numbers>

#include "vaerepa/ad/ops.hpp"
#include "vaerepa/optim.hpp"
#include "vaerepa/rng.hpp"

namespace vaerepa::backbone {

using ad::Var;

void BackboneConfig::validate() const {
    require(channels >= 1 && height >= 1 && width >= 1, ErrorKind::Config, "latent shape must be non-empty");
    require(patch >= 1 && height % patch == 0 && width % patch == 0, ErrorKind::Config,
            "latent {}x{} is not divisible by patch size {}", height, width, patch);
    require(dim >= 4 && dim % 4 == 0, ErrorKind::Config, "width {} must be a positive multiple of 4", dim);
    require(heads >= 1 && dim % heads == 0, ErrorKind::Config, "width {} not divisible by {} heads", dim, heads);
    require(classes >= 1, ErrorKind::Config, "need at least one class");
    require(time_freq_dim >= 2 && time_freq_dim % 2 == 0, ErrorKind::Config, "time_freq_dim must be even");
    require(label_dropout >= 0.0 && label_dropout <= 1.0, ErrorKind::Config, "label_dropout must lie in [0, 1]");
}

void BackboneConfig::validate_tap(std::size_t k) const {
    require(k >= 1 && k <= depth, ErrorKind::Config, "tap depth {} outside [1, {}]", k, depth);
}

void BackboneConfig::to_kv(KvConfig& kv) const {
    kv.set("latent_channels", std::to_string(channels));
    kv.set("latent_height", std::to_string(height));
    kv.set("latent_width", std::to_string(width));
    kv.set("patch", std::to_string(patch));
    kv.set("depth", std::to_string(depth));
    kv.set("width", std::to_string(dim));
    kv.set("heads", std::to_string(heads));
    kv.set("classes", std::to_string(classes));
    kv.set("time_freq_dim", std::to_string(time_freq_dim));
    kv.set("label_dropout", fmt::format("{}", label_dropout));
    kv.set("seed", std::to_string(seed));
}

BackboneConfig BackboneConfig::from_kv(const KvConfig& kv) {
    BackboneConfig c;
    const auto sz = [&](const char* k) { return static_cast<std::size_t>(kv.integer(k)); };
    c.channels = sz("latent_channels");
    c.height = sz("latent_height");
    c.width = sz("latent_width");
    c.patch = sz("patch");
    c.depth = sz("depth");
    c.dim = sz("width");
    c.heads = sz("heads");
    c.classes = sz("classes");
    c.time_freq_dim = sz("time_freq_dim");
    c.label_dropout = kv.real("label_dropout");
    c.seed = kv.u64("seed");
    c.validate();
    return c;
}

std::size_t count_params(const BackboneConfig& c) {
    const std::size_t d = c.dim, td = c.token_dim();
    const std::size_t x_embed = td * d + d;
    const std::size_t t_embed = c.time_freq_dim * d + d + d * d + d;
    const std::size_t y_embed = (c.classes + 1) * d;
    const std::size_t block = (d * 6 * d + 6 * d) + (d * 3 * d + 3 * d) + (d * d + d) + (d * 4 * d + 4 * d) +
                              (4 * d * d + d);
    const std::size_t final_layer = (d * 2 * d + 2 * d) + (d * td + td);
    return x_embed + t_embed + y_embed + c.depth * block + final_layer;
}

template <typename T>
Tensor<T> patchify(std::span<const T> x, std::size_t batch, std::size_t c, std::size_t h, std::size_t w,
                   std::size_t p) {
    require(x.size() == batch * c * h * w && h % p == 0 && w % p == 0, ErrorKind::Shape,
            "patchify: {} values do not form [{},{},{},{}] with patch {}", x.size(), batch, c, h, w, p);
    const std::size_t gh = h / p, gw = w / p, td = c * p * p;
    Tensor<T> out({batch * gh * gw, td});
    T* o = out.data();
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < gh; ++i)
            for (std::size_t j = 0; j < gw; ++j)
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t di = 0; di < p; ++di)
                        for (std::size_t dj = 0; dj < p; ++dj)
                            *o++ = x[((b * c + ch) * h + i * p + di) * w + j * p + dj];
    return out;
}

template <typename T>
Tensor<T> unpatchify(std::span<const T> tokens, std::size_t batch, std::size_t c, std::size_t h, std::size_t w,
                     std::size_t p) {
    require(tokens.size() == batch * c * h * w && h % p == 0 && w % p == 0, ErrorKind::Shape,
            "unpatchify: {} values do not form [{},{},{},{}] with patch {}", tokens.size(), batch, c, h, w, p);
    const std::size_t gh = h / p, gw = w / p;
    Tensor<T> out({batch, c, h, w});
    const T* src = tokens.data();
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < gh; ++i)
            for (std::size_t j = 0; j < gw; ++j)
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t di = 0; di < p; ++di)
                        for (std::size_t dj = 0; dj < p; ++dj)
                            out[((b * c + ch) * h + i * p + di) * w + j * p + dj] = *src++;
    return out;
}

template <typename T>
Tensor<T> timestep_embedding(std::span<const double> t, std::size_t dim) {
    const std::size_t half = dim / 2;
    Tensor<T> out({t.size(), dim});
    for (std::size_t b = 0; b < t.size(); ++b) {
        for (std::size_t i = 0; i < half; ++i) {
            const double f = std::exp(-std::log(10000.0) * double(i) / double(half));
            const double arg = 1000.0 * t[b] * f;
            out[b * dim + i] = T(std::cos(arg));
            out[b * dim + half + i] = T(std::sin(arg));
        }
    }
    return out;
}

namespace {

// 1-D sin-cos features of `pos` written into dst[0, dim).
void sincos_1d(double pos, std::size_t dim, double* dst) {
    const std::size_t half = dim / 2;
    for (std::size_t i = 0; i < half; ++i) {
        const double omega = 1.0 / std::pow(10000.0, double(i) / double(half));
        dst[i] = std::sin(pos * omega);
        dst[half + i] = std::cos(pos * omega);
    }
}

}  // namespace

template <typename T>
Tensor<T> pos_embed_2d(std::size_t dim, std::size_t gh, std::size_t gw) {
    require(dim % 4 == 0, ErrorKind::Config, "positional embedding width {} is not a multiple of 4", dim);
    Tensor<T> out({gh * gw, dim});
    std::vector<double> row(dim);
    for (std::size_t i = 0; i < gh; ++i) {
        for (std::size_t j = 0; j < gw; ++j) {
            sincos_1d(double(j), dim / 2, row.data());
            sincos_1d(double(i), dim / 2, row.data() + dim / 2);
            for (std::size_t k = 0; k < dim; ++k) out[(i * gw + j) * dim + k] = T(row[k]);
        }
    }
    return out;
}

template <typename T>
void Backbone<T>::add_linear(const std::string& name, std::size_t in, std::size_t out, std::uint64_t seed) {
    Tensor<T> w({in, out});
    init::xavier_uniform(w, in, out, seed);
    params_.add(name + ".w", std::move(w));
    params_.add(name + ".b", Tensor<T>({out}));
}

template <typename T>
Backbone<T>::Backbone(BackboneConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const std::size_t d = cfg_.dim;
    std::uint64_t tag = 0;
    const auto seed = [&] { return derive_seed(cfg_.seed, 0x42424F4E /* BBON */, ++tag); };

    add_linear("x_embed", cfg_.token_dim(), d, seed());
    {
        Tensor<T> w1({cfg_.time_freq_dim, d}), w2({d, d});
        init::normal(w1, 0.02, seed());
        init::normal(w2, 0.02, seed());
        params_.add("t_embed.fc1.w", std::move(w1));
        params_.add("t_embed.fc1.b", Tensor<T>({d}));
        params_.add("t_embed.fc2.w", std::move(w2));
        params_.add("t_embed.fc2.b", Tensor<T>({d}));
    }
    {
        Tensor<T> table({cfg_.classes + 1, d});
        init::normal(table, 0.02, seed());
        params_.add("y_embed.table", std::move(table));
    }
    for (std::size_t k = 0; k < cfg_.depth; ++k) {
        const std::string p = fmt::format("blocks.{}.", k);
        params_.add(p + "ada.w", Tensor<T>({d, 6 * d}));
        params_.add(p + "ada.b", Tensor<T>({6 * d}));
        add_linear(p + "qkv", d, 3 * d, seed());
        add_linear(p + "proj", d, d, seed());
        add_linear(p + "fc1", d, 4 * d, seed());
        add_linear(p + "fc2", 4 * d, d, seed());
    }
    params_.add("final.ada.w", Tensor<T>({d, 2 * d}));
    params_.add("final.ada.b", Tensor<T>({2 * d}));
    params_.add("final.linear.w", Tensor<T>({d, cfg_.token_dim()}));
    params_.add("final.linear.b", Tensor<T>({cfg_.token_dim()}));

    pos_ = pos_embed_2d<T>(d, cfg_.grid_h(), cfg_.grid_w());
}

template <typename T>
typename Backbone<T>::GraphOutput Backbone<T>::forward_graph(const ad::Binder<T>& bind, Var tokens,
                                                             std::span<const double> t,
                                                             std::span<const std::size_t> labels,
                                                             const std::set<std::size_t>& taps) const {
    auto& g = bind.graph();
    const std::size_t batch = t.size(), n_tok = cfg_.tokens(), d = cfg_.dim;
    require(labels.size() == batch, ErrorKind::Shape, "got {} labels for a batch of {}", labels.size(), batch);
    require(g.shape(tokens) == Shape{batch * n_tok, cfg_.token_dim()}, ErrorKind::Shape,
            "backbone input has shape {}, expected [{},{}]", shape_str(g.shape(tokens)), batch * n_tok,
            cfg_.token_dim());
    for (double ti : t) require(ti >= 0.0 && ti <= 1.0, ErrorKind::Domain, "time {} outside [0, 1]", ti);
    for (std::size_t y : labels)
        require(y <= cfg_.null_label(), ErrorKind::Domain, "label {} outside [0, {}]", y, cfg_.null_label());
    for (std::size_t k : taps) cfg_.validate_tap(k);

    const auto lin = [&](Var x, const std::string& name) {
        return ad::linear(g, x, bind(name + ".w"), bind(name + ".b"));
    };

    Var x = ad::add_tiled(g, lin(tokens, "x_embed"), g.constant(pos_));
    Var temb = g.constant(timestep_embedding<T>(t, cfg_.time_freq_dim));
    temb = lin(ad::silu(g, lin(temb, "t_embed.fc1")), "t_embed.fc2");
    Var c = ad::silu(g, ad::add(g, temb, ad::embedding(g, bind("y_embed.table"), labels)));

    GraphOutput out;
    for (std::size_t k = 0; k < cfg_.depth; ++k) {
        const std::string p = fmt::format("blocks.{}.", k);
        Var mod = lin(c, p + "ada");
        const auto chunk = [&](std::size_t i) { return ad::slice_cols(g, mod, i * d, (i + 1) * d); };
        Var h = ad::modulate(g, ad::layer_norm(g, x), chunk(0), chunk(1), n_tok);
        h = lin(ad::attention(g, lin(h, p + "qkv"), batch, n_tok, cfg_.heads), p + "proj");
        x = ad::gated_add(g, x, h, chunk(2), n_tok);
        h = ad::modulate(g, ad::layer_norm(g, x), chunk(3), chunk(4), n_tok);
        h = lin(ad::gelu(g, lin(h, p + "fc1")), p + "fc2");
        x = ad::gated_add(g, x, h, chunk(5), n_tok);
        if (taps.count(k + 1)) out.hidden[k + 1] = x;
    }
    Var mod = lin(c, "final.ada");
    Var h = ad::modulate(g, ad::layer_norm(g, x), ad::slice_cols(g, mod, 0, d), ad::slice_cols(g, mod, d, 2 * d),
                         n_tok);
    out.velocity = lin(h, "final.linear");
    return out;
}

template <typename T>
typename Backbone<T>::Output Backbone<T>::forward(const Tensor<T>& y, std::span<const double> t,
                                                  std::span<const std::size_t> labels,
                                                  const std::set<std::size_t>& taps) const {
    const std::size_t b = t.size();
    require(y.shape() == Shape{b, cfg_.channels, cfg_.height, cfg_.width}, ErrorKind::Shape,
            "backbone input has shape {}, expected [{},{},{},{}]", shape_str(y.shape()), b, cfg_.channels,
            cfg_.height, cfg_.width);
    ad::Graph<T> g(false);
    ad::Binder<T> bind(g, params_);
    Var tokens = g.constant(patchify<T>(y.span(), b, cfg_.channels, cfg_.height, cfg_.width, cfg_.patch));
    const GraphOutput go = forward_graph(bind, tokens, t, labels, taps);
    Output out;
    out.velocity =
        unpatchify<T>(g.value(go.velocity).span(), b, cfg_.channels, cfg_.height, cfg_.width, cfg_.patch);
    for (const auto& [k, v] : go.hidden) out.hidden[k] = g.value(v);
    return out;
}

#define VAEREPA_INSTANTIATE(T)                                                                                 \
    template Tensor<T> patchify<T>(std::span<const T>, std::size_t, std::size_t, std::size_t, std::size_t,     \
                                   std::size_t);                                                               \
    template Tensor<T> unpatchify<T>(std::span<const T>, std::size_t, std::size_t, std::size_t, std::size_t,   \
                                     std::size_t);                                                             \
    template Tensor<T> timestep_embedding<T>(std::span<const double>, std::size_t);                            \
    template Tensor<T> pos_embed_2d<T>(std::size_t, std::size_t, std::size_t);                                 \
    template class Backbone<T>;

VAEREPA_INSTANTIATE(float)
VAEREPA_INSTANTIATE(double)
#undef VAEREPA_INSTANTIATE

}  // namespace vaerepa::backbone
