// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

#include "vaerepa/vae.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "vaerepa/ad/ops.hpp"
#include "vaerepa/binio.hpp"
#include "vaerepa/checkpoint.hpp"
#include "vaerepa/optim.hpp"
#include "vaerepa/rng.hpp"

namespace vaerepa::vae {

using ad::Var;

namespace {

constexpr std::uint64_t kTagInit = 0x56494E49;   // "VINI"
constexpr std::uint64_t kTagBatch = 0x56424154;  // "VBAT"
constexpr std::uint64_t kTagNoise = 0x564E4F49;  // "VNOI"
constexpr std::size_t kEncodeChunk = 64;

std::string join_widths(const std::vector<std::size_t>& w) {
    std::string s;
    for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + std::to_string(w[i]);
    return s;
}

}  // namespace

std::size_t VaeConfig::stages() const { return static_cast<std::size_t>(std::countr_zero(downsample)); }

void VaeConfig::validate(std::size_t image_size) const {
    require(downsample >= 1 && std::has_single_bit(downsample), ErrorKind::Config,
            "vae downsampling factor {} is not a power of two", downsample);
    require(latent_channels >= 1, ErrorKind::Config, "latent channel count must be >= 1");
    require(widths.size() == std::max<std::size_t>(stages(), 1), ErrorKind::Config,
            "vae widths list has {} entries, expected {} (one per stage)", widths.size(), std::max<std::size_t>(stages(), 1));
    require(image_size % downsample == 0, ErrorKind::Config, "image size {} not divisible by downsampling factor {}",
            image_size, downsample);
    require(kl_weight >= 0.0 && lr > 0.0 && batch >= 1, ErrorKind::Config, "invalid vae optimisation settings");
}

void VaeConfig::to_kv(KvConfig& kv) const {
    kv.set("latent_channels", std::to_string(latent_channels));
    kv.set("vae_downsample", std::to_string(downsample));
    kv.set("vae_widths", join_widths(widths));
    kv.set("kl_weight", fmt::format("{}", kl_weight));
    kv.set("vae_steps", std::to_string(steps));
    kv.set("vae_batch", std::to_string(batch));
    kv.set("vae_lr", fmt::format("{}", lr));
    kv.set("seed", std::to_string(seed));
}

VaeConfig VaeConfig::from_kv(const KvConfig& kv) {
    VaeConfig c;
    c.latent_channels = static_cast<std::size_t>(kv.integer("latent_channels"));
    c.downsample = static_cast<std::size_t>(kv.integer("vae_downsample"));
    c.widths.clear();
    for (auto w : kv.int_list("vae_widths")) {
        require(w > 0, ErrorKind::Config, "vae widths must be positive");
        c.widths.push_back(static_cast<std::size_t>(w));
    }
    c.kl_weight = kv.real("kl_weight");
    c.steps = static_cast<std::size_t>(kv.integer("vae_steps"));
    c.batch = static_cast<std::size_t>(kv.integer("vae_batch"));
    c.lr = kv.real("vae_lr");
    c.seed = kv.u64("seed");
    return c;
}

void Vae::add_conv(const std::string& name, std::size_t cin, std::size_t cout, std::size_t k, std::uint64_t seed) {
    Tensor<float> w({cout, cin, k, k});
    init::fan_in_uniform(w, cin * k * k, seed);
    params_.add(name + ".w", std::move(w));
    params_.add(name + ".b", Tensor<float>({cout}));
}

void Vae::add_res(const std::string& prefix, std::size_t width, std::uint64_t seed) {
    add_conv(prefix + ".conv1", width, width, 3, derive_seed(seed, 1));
    add_conv(prefix + ".conv2", width, width, 3, derive_seed(seed, 2));
}

Vae::Vae(VaeConfig cfg) : cfg_(std::move(cfg)) {
    const std::size_t n = cfg_.stages();
    const auto width = [&](std::size_t i) { return cfg_.widths[std::min(i, cfg_.widths.size() - 1)]; };
    std::uint64_t tag = 0;
    const auto seed = [&] { return derive_seed(cfg_.seed, kTagInit, ++tag); };

    add_conv("enc.conv_in", cfg_.in_channels, width(0), 3, seed());
    for (std::size_t i = 0; i < n; ++i) {
        add_res(fmt::format("enc.s{}.res", i), width(i), seed());
        add_conv(fmt::format("enc.s{}.down", i), width(i), width(i + 1), 3, seed());
    }
    add_res("enc.mid", width(n), seed());
    add_conv("enc.conv_out", width(n), 2 * cfg_.latent_channels, 3, seed());

    add_conv("dec.conv_in", cfg_.latent_channels, width(n), 3, seed());
    add_res("dec.mid", width(n), seed());
    for (std::size_t i = n; i-- > 0;) {
        add_conv(fmt::format("dec.s{}.up", i), width(i + 1), width(i), 3, seed());
        add_res(fmt::format("dec.s{}.res", i), width(i), seed());
    }
    add_conv("dec.conv_out", width(0), cfg_.in_channels, 3, seed());
}

void Vae::set_scale(float s) {
    require(s > 0.0f && std::isfinite(s), ErrorKind::Numeric, "latent scale must be positive and finite, got {}", s);
    scale_ = s;
}

Var Vae::res_block(const ad::Binder<float>& bind, const std::string& prefix, Var x) const {
    auto& g = bind.graph();
    Var h = ad::conv2d(g, ad::silu(g, x), bind(prefix + ".conv1.w"), bind(prefix + ".conv1.b"), 1, 1);
    h = ad::conv2d(g, ad::silu(g, h), bind(prefix + ".conv2.w"), bind(prefix + ".conv2.b"), 1, 1);
    return ad::add(g, x, h);
}

Vae::Posterior Vae::encode_graph(const ad::Binder<float>& bind, Var images) const {
    auto& g = bind.graph();
    const std::size_t n = cfg_.stages();
    Var h = ad::conv2d(g, images, bind("enc.conv_in.w"), bind("enc.conv_in.b"), 1, 1);
    for (std::size_t i = 0; i < n; ++i) {
        h = res_block(bind, fmt::format("enc.s{}.res", i), h);
        h = ad::conv2d(g, h, bind(fmt::format("enc.s{}.down.w", i)), bind(fmt::format("enc.s{}.down.b", i)), 2, 1);
    }
    h = res_block(bind, "enc.mid", h);
    Var moments = ad::conv2d(g, ad::silu(g, h), bind("enc.conv_out.w"), bind("enc.conv_out.b"), 1, 1);
    const std::size_t c = cfg_.latent_channels;
    return {ad::slice_channels(g, moments, 0, c), ad::slice_channels(g, moments, c, 2 * c)};
}

Var Vae::decode_graph(const ad::Binder<float>& bind, Var latents) const {
    auto& g = bind.graph();
    Var h = ad::conv2d(g, latents, bind("dec.conv_in.w"), bind("dec.conv_in.b"), 1, 1);
    h = res_block(bind, "dec.mid", h);
    for (std::size_t i = cfg_.stages(); i-- > 0;) {
        h = ad::upsample2x(g, h);
        h = ad::conv2d(g, h, bind(fmt::format("dec.s{}.up.w", i)), bind(fmt::format("dec.s{}.up.b", i)), 1, 1);
        h = res_block(bind, fmt::format("dec.s{}.res", i), h);
    }
    return ad::conv2d(g, ad::silu(g, h), bind("dec.conv_out.w"), bind("dec.conv_out.b"), 1, 1);
}

namespace {

// Copies rows [b0, b1) of a batch-major tensor.
Tensor<float> batch_slice(const Tensor<float>& t, std::size_t b0, std::size_t b1) {
    Shape s = t.shape();
    const std::size_t per = t.size() / s[0];
    s[0] = b1 - b0;
    return Tensor<float>(s, std::vector<float>(t.data() + b0 * per, t.data() + b1 * per));
}

}  // namespace

Tensor<float> Vae::encode_batch(const Tensor<float>& images) const {
    require(images.rank() == 4 && images.dim(1) == cfg_.in_channels && images.dim(2) % cfg_.downsample == 0 &&
                images.dim(3) % cfg_.downsample == 0,
            ErrorKind::Shape, "encode: images have shape {}, expected [B,{},S,S]", shape_str(images.shape()),
            cfg_.in_channels);
    const std::size_t b = images.dim(0), h = images.dim(2) / cfg_.downsample, w = images.dim(3) / cfg_.downsample;
    Tensor<float> out({b, cfg_.latent_channels, h, w});
    const std::size_t per = cfg_.latent_channels * h * w;
    for (std::size_t b0 = 0; b0 < b; b0 += kEncodeChunk) {
        const std::size_t b1 = std::min(b, b0 + kEncodeChunk);
        ad::Graph<float> g(false);
        ad::Binder<float> bind(g, params_);
        const Posterior post = encode_graph(bind, g.constant(batch_slice(images, b0, b1)));
        const auto& mean = g.value(post.mean);
        for (std::size_t i = 0; i < mean.size(); ++i) out[b0 * per + i] = mean[i] * scale_;
    }
    return out;
}

Tensor<float> Vae::encode(const Tensor<float>& image) const {
    require(image.rank() == 3, ErrorKind::Shape, "encode: image has shape {}, expected [3,S,S]",
            shape_str(image.shape()));
    Shape s = image.shape();
    s.insert(s.begin(), 1);
    Tensor<float> z = encode_batch(image.reshaped(s));
    return std::move(z).reshaped({z.dim(1), z.dim(2), z.dim(3)});
}

Tensor<float> Vae::decode_batch(const Tensor<float>& latents) const {
    require(latents.rank() == 4 && latents.dim(1) == cfg_.latent_channels, ErrorKind::Shape,
            "decode: latents have shape {}, expected [B,{},h,w]", shape_str(latents.shape()), cfg_.latent_channels);
    const std::size_t b = latents.dim(0), s_h = latents.dim(2) * cfg_.downsample, s_w = latents.dim(3) * cfg_.downsample;
    Tensor<float> out({b, cfg_.in_channels, s_h, s_w});
    const std::size_t per = cfg_.in_channels * s_h * s_w;
    for (std::size_t b0 = 0; b0 < b; b0 += kEncodeChunk) {
        const std::size_t b1 = std::min(b, b0 + kEncodeChunk);
        Tensor<float> z = batch_slice(latents, b0, b1);
        for (auto& v : z.span()) v /= scale_;
        ad::Graph<float> g(false);
        ad::Binder<float> bind(g, params_);
        const auto& img = g.value(decode_graph(bind, g.constant(std::move(z))));
        for (std::size_t i = 0; i < img.size(); ++i) out[b0 * per + i] = std::clamp(img[i], -1.0f, 1.0f);
    }
    return out;
}

Tensor<float> Vae::decode(const Tensor<float>& latent) const {
    require(latent.rank() == 3, ErrorKind::Shape, "decode: latent has shape {}, expected [C,h,w]",
            shape_str(latent.shape()));
    Shape s = latent.shape();
    s.insert(s.begin(), 1);
    Tensor<float> x = decode_batch(latent.reshaped(s));
    return std::move(x).reshaped({x.dim(1), x.dim(2), x.dim(3)});
}

void Vae::save(const std::filesystem::path& path) const {
    Checkpoint ck;
    cfg_.to_kv(ck.meta);
    ck.meta.set("kind", "vae");
    ck.add_params("vae.", params_);
    ck.add("vae.scale", Tensor<float>({1}, scale_));
    ck.save(path);
}

Vae Vae::load(const std::filesystem::path& path) {
    require(std::filesystem::exists(path), ErrorKind::MissingArtifact,
            "VAE weights {} not found (produce them with `train-vae`)", path.string());
    const Checkpoint ck = Checkpoint::load(path);
    require(ck.meta.has("kind") && ck.meta.str("kind") == "vae", ErrorKind::Io, "{} is not a VAE checkpoint",
            path.string());
    Vae v(VaeConfig::from_kv(ck.meta));
    ck.load_params("vae.", v.params_);
    v.set_scale(ck.get("vae.scale")[0]);
    return v;
}

namespace {

Tensor<float> gather_images(const data::Dataset& ds, std::span<const std::size_t> idx) {
    const std::size_t per = 3 * ds.size * ds.size;
    Tensor<float> out({idx.size(), 3, ds.size, ds.size});
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy_n(ds.samples[idx[i]].pixels.data(), per, out.data() + i * per);
    return out;
}

}  // namespace

Vae train_vae(const VaeConfig& cfg, const data::Dataset& train, VaeTrainReport* report, const ProgressFn& progress) {
    require(!train.samples.empty(), ErrorKind::Config, "train_vae: dataset is empty");
    cfg.validate(train.size);
    Vae vae(cfg);
    AdamW opt(vae.params(), AdamW::Hyper{cfg.lr, 0.9, 0.999, 1e-8, 0.0});
    EpochSampler sampler(train.samples.size(), cfg.batch, derive_seed(cfg.seed, kTagBatch));
    const std::size_t h = train.size / cfg.downsample;

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        const auto idx = sampler.batch(step);
        const Tensor<float> images = gather_images(train, idx);
        Tensor<float> noise({idx.size(), cfg.latent_channels, h, h});
        Philox rng(derive_seed(cfg.seed, kTagNoise), step);
        for (auto& v : noise.span()) v = static_cast<float>(rng.normal());

        ad::Graph<float> g;
        ad::Binder<float> bind(g, vae.params());
        Var x = g.constant_ref(images);
        const Vae::Posterior post = vae.encode_graph(bind, x);
        Var z = ad::gaussian_sample(g, post.mean, post.logvar, noise);
        Var recon = ad::mse(g, vae.decode_graph(bind, z), images);
        Var kl = ad::kl_standard_normal(g, post.mean, post.logvar);
        Var loss = ad::add(g, recon, ad::scale(g, kl, static_cast<float>(cfg.kl_weight)));
        const double lv = g.scalar(loss);
        require(std::isfinite(lv), ErrorKind::Numeric, "VAE training diverged at step {} (loss {})", step, lv);
        vae.params().zero_grad();
        g.backward(loss);
        opt.step(vae.params());
        if (report) report->losses.push_back(lv);
        if (progress) progress(step, lv);
    }
    vae.set_scale(compute_scale(vae, train));
    return vae;
}

float compute_scale(const Vae& vae, const data::Dataset& ds) {
    require(!ds.samples.empty(), ErrorKind::Config, "compute_scale: dataset is empty");
    Vae unscaled = vae;
    unscaled.set_scale(1.0f);
    double sum = 0.0, sum_sq = 0.0;
    std::size_t n = 0;
    std::vector<std::size_t> idx;
    for (std::size_t b0 = 0; b0 < ds.samples.size(); b0 += kEncodeChunk) {
        idx.clear();
        for (std::size_t i = b0; i < std::min(ds.samples.size(), b0 + kEncodeChunk); ++i) idx.push_back(i);
        const Tensor<float> z = unscaled.encode_batch(gather_images(ds, idx));
        for (float v : z.span()) {
            sum += v;
            sum_sq += double(v) * v;
        }
        n += z.size();
    }
    const double mean = sum / double(n);
    const double var = std::max(sum_sq / double(n) - mean * mean, 0.0);
    require(var > 0.0, ErrorKind::Numeric, "latents have zero variance; cannot compute a scale");
    return static_cast<float>(1.0 / std::sqrt(var));
}

double psnr(std::span<const float> a, std::span<const float> b) {
    require(a.size() == b.size() && !a.empty(), ErrorKind::Shape, "psnr: size mismatch");
    double se = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) se += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
    const double mse = se / double(a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(4.0 / mse);
}

double reconstruction_psnr(const Vae& vae, const data::Dataset& ds) {
    double total = 0.0;
    std::vector<std::size_t> idx;
    const std::size_t per = 3 * ds.size * ds.size;
    for (std::size_t b0 = 0; b0 < ds.samples.size(); b0 += kEncodeChunk) {
        idx.clear();
        for (std::size_t i = b0; i < std::min(ds.samples.size(), b0 + kEncodeChunk); ++i) idx.push_back(i);
        const Tensor<float> x = gather_images(ds, idx);
        const Tensor<float> r = vae.decode_batch(vae.encode_batch(x));
        for (std::size_t i = 0; i < idx.size(); ++i)
            total += psnr(x.span().subspan(i * per, per), r.span().subspan(i * per, per));
    }
    return total / double(ds.samples.size());
}

void FeatureCache::write(const std::filesystem::path& path) const {
    require(labels.size() == ids.size() && latents.size() == ids.size() * latent_size(), ErrorKind::Shape,
            "feature cache is internally inconsistent");
    require(scale > 0.0f, ErrorKind::Numeric, "feature cache scale must be positive");
    auto os = binio::open_out(path);
    binio::put_magic(os, "VRFC");
    binio::put<std::uint32_t>(os, kVersion);
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(count()));
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(channels));
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(height));
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(width));
    binio::put<float>(os, scale);
    for (std::size_t i = 0; i < count(); ++i) {
        binio::put<std::uint64_t>(os, ids[i]);
        binio::put<std::uint16_t>(os, labels[i]);
        binio::put_f32s(os, latent(i));
    }
    require(static_cast<bool>(os), ErrorKind::Io, "failed writing {}", path.string());
}

FeatureCache FeatureCache::read(const std::filesystem::path& path) {
    require(std::filesystem::exists(path), ErrorKind::MissingArtifact,
            "feature cache {} not found (produce it with `extract-features`)", path.string());
    auto is = binio::open_in(path);
    binio::expect_magic(is, "VRFC", path);
    const auto version = binio::get<std::uint32_t>(is, path);
    require(version == kVersion, ErrorKind::Io, "{}: unsupported feature cache version {}", path.string(), version);
    FeatureCache fc;
    const auto count = binio::get<std::uint32_t>(is, path);
    fc.channels = binio::get<std::uint32_t>(is, path);
    fc.height = binio::get<std::uint32_t>(is, path);
    fc.width = binio::get<std::uint32_t>(is, path);
    fc.scale = binio::get<float>(is, path);
    require(fc.scale > 0.0f, ErrorKind::Io, "{}: non-positive scale", path.string());
    const auto expected = kHeaderBytes + std::uintmax_t(count) * fc.record_bytes();
    const auto actual = std::filesystem::file_size(path);
    require(actual == expected, ErrorKind::Io, "{}: {} bytes on disk, header implies {}", path.string(), actual,
            expected);
    fc.ids.resize(count);
    fc.labels.resize(count);
    fc.latents.resize(std::size_t(count) * fc.latent_size());
    for (std::size_t i = 0; i < count; ++i) {
        fc.ids[i] = binio::get<std::uint64_t>(is, path);
        fc.labels[i] = binio::get<std::uint16_t>(is, path);
        binio::get_f32s(is, std::span<float>(fc.latents).subspan(i * fc.latent_size(), fc.latent_size()), path);
    }
    char extra;
    require(!is.read(&extra, 1), ErrorKind::Io, "{}: trailing bytes after {} records", path.string(), count);
    return fc;
}

FeatureCache extract_features(const Vae& vae, const data::Dataset& ds, const std::filesystem::path& out) {
    const auto& cfg = vae.config();
    cfg.validate(ds.size);
    FeatureCache fc;
    fc.channels = cfg.latent_channels;
    fc.height = fc.width = ds.size / cfg.downsample;
    fc.scale = vae.scale();
    std::vector<std::size_t> order(ds.samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return ds.samples[a].id < ds.samples[b].id; });
    fc.latents.resize(order.size() * fc.latent_size());
    for (std::size_t b0 = 0; b0 < order.size(); b0 += kEncodeChunk) {
        const std::size_t b1 = std::min(order.size(), b0 + kEncodeChunk);
        const std::span<const std::size_t> idx(order.data() + b0, b1 - b0);
        const Tensor<float> z = vae.encode_batch(gather_images(ds, idx));
        std::copy(z.span().begin(), z.span().end(), fc.latents.begin() + b0 * fc.latent_size());
    }
    for (std::size_t i : order) {
        require(fc.ids.empty() || ds.samples[i].id > fc.ids.back(), ErrorKind::Config, "duplicate sample id {}",
                ds.samples[i].id);
        fc.ids.push_back(ds.samples[i].id);
        fc.labels.push_back(ds.samples[i].label);
    }
    if (!out.empty()) fc.write(out);
    return fc;
}

}  // namespace vaerepa::vae
