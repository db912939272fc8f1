// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>

#include "vaerepa/ablate.hpp"
#include "vaerepa/checkpoint.hpp"
#include "vaerepa/data.hpp"
#include "vaerepa/eval.hpp"
#include "vaerepa/image_io.hpp"
#include "vaerepa/interpolant.hpp"
#include "vaerepa/rng.hpp"
#include "vaerepa/sampler.hpp"
#include "vaerepa/trainer.hpp"
#include "vaerepa/vae.hpp"

namespace vaerepa::cli {

namespace fs = std::filesystem;

namespace {

constexpr KeySpec kKeys[] = {
    {"seed", "0", "base seed for every random stream"},
    // data
    {"count", "10000", "training images to generate"},
    {"eval_count", "2000", "held-out images (toy-FID reference)"},
    {"image_size", "32", "image side length in pixels"},
    {"classes", "8", "number of classes"},
    {"data_dir", "", "optional folder of class sub-folders to use instead of the shapes corpus"},
    // vae
    {"latent_channels", "4", "VAE latent channels"},
    {"vae_downsample", "4", "VAE spatial downsampling factor (power of two)"},
    {"vae_widths", "32,64", "VAE channel width per downsampling stage"},
    {"kl_weight", "1e-6", "weight of the VAE KL term"},
    {"vae_steps", "3000", "VAE optimisation steps"},
    {"vae_batch", "16", "VAE batch size"},
    {"vae_lr", "1e-3", "VAE learning rate"},
    // backbone
    {"patch", "2", "latent patch size"},
    {"depth", "6", "transformer blocks"},
    {"width", "256", "transformer width"},
    {"heads", "4", "attention heads"},
    {"time_freq_dim", "256", "sinusoidal time features"},
    {"label_dropout", "0.1", "probability of replacing a label by the null class in training"},
    // alignment
    {"proj_layers", "5", "projector linear layers (>= 2)"},
    {"proj_hidden", "0", "projector hidden width (0 = transformer width)"},
    {"objective", "smooth_l1", "alignment objective: smooth_l1 | l1 | l2 | cosine"},
    {"beta", "0.05", "smooth-l1 threshold"},
    {"lambda", "1.0", "alignment loss weight"},
    {"align_depth", "2", "block after which hidden states are aligned (1-based)"},
    {"t_lo", "0", "alignment applies to samples with t >= t_lo"},
    {"t_hi", "1", "alignment applies to samples with t <= t_hi"},
    // training
    {"lr", "1e-4", "learning rate"},
    {"weight_decay", "0", "decoupled weight decay"},
    {"batch", "64", "training batch size"},
    {"iters", "20000", "training iterations"},
    {"ema_decay", "0.9999", "EMA decay of the sampling weights"},
    {"log_every", "100", "progress line cadence (steps)"},
    {"ckpt_every", "5000", "checkpoint cadence (steps, 0 = final only)"},
    {"resume", "", "training checkpoint to resume from"},
    // sampling
    {"solver", "sde", "ode | sde"},
    {"steps", "250", "sampler steps"},
    {"cfg_scale", "1.0", "classifier-free guidance scale (1 = off)"},
    {"sample_labels", "", "comma list of classes to cycle through (-1 = unconditional); empty = all classes"},
    {"t_min", "0.004", "integration stops at this time"},
    {"sample_count", "1000", "chains to sample"},
    {"diffusion_scale", "1.0", "SDE diffusion multiplier (0 = ODE)"},
    {"use_ema", "true", "sample with EMA weights"},
    {"decode", "true", "decode a preview grid when VAE weights are available"},
    {"grid_count", "64", "images in preview grids"},
    // inputs (empty = the standard location under --out)
    {"data", "", "dataset directory (default <out>/data)"},
    {"vae", "", "VAE weights (default <out>/vae/vae.vrck)"},
    {"features", "", "training feature cache (default <out>/features/train.vrfc)"},
    {"reference", "", "held-out feature cache (default <out>/features/eval.vrfc)"},
    {"checkpoint", "", "training checkpoint (default <out>/train/final.vrck)"},
    {"samples", "", "sampled latents (default <out>/sample/samples.vrfc)"},
    // visualisation
    {"viz_depths", "2,6", "tap depths shown by viz-pca"},
    {"viz_t", "0.25,0.5,0.75", "noise levels shown by viz-pca"},
    {"viz_count", "4", "samples shown by viz-pca"},
    // ablation
    {"axes", "", "ablation axes, e.g. depth:2,3,4;objective:smooth_l1,cosine"},
    {"ablate_mode", "single", "single | grid"},
    {"ablate_iters", "1000", "training iterations per ablation run"},
    {"ablate_sample_count", "512", "samples per ablation run for toy-FID"},
    {"ablate_steps", "50", "sampler steps per ablation run"},
};

constexpr const char* kSubcommands[] = {"gen-data", "train-vae", "extract-features", "train", "sample",
                                        "eval",     "viz-pca",   "flops",            "ablate"};

constexpr const char* kSubcommandHelp[] = {
    "generate the shapes training and held-out splits",
    "train the VAE and report held-out PSNR",
    "encode both splits into feature caches",
    "train the diffusion transformer with alignment",
    "draw latents with the ODE or SDE sampler",
    "toy-FID of samples against the held-out cache, plus FLOP report",
    "PCA images of hidden states at chosen depths and noise levels",
    "FLOP and parameter accounting",
    "run an ablation sweep and write results.csv",
};

constexpr std::uint64_t kTagEval = 0x4556414C;  // "EVAL"
constexpr std::uint64_t kTagViz = 0x56495A21;   // "VIZ!"

template <typename... Args>
void note(fmt::format_string<Args...> f, Args&&... args) {
    fmt::print(stderr, "{}\n", fmt::format(f, std::forward<Args>(args)...));
}

std::size_t size_key(const KvConfig& c, const char* k) {
    const auto v = c.integer(k);
    require(v >= 0, ErrorKind::Config, "config key `{}` must be non-negative, got {}", k, v);
    return static_cast<std::size_t>(v);
}

fs::path input(KvConfig& cfg, const char* key, const fs::path& fallback) {
    const std::string v = cfg.str(key);
    const fs::path p = fs::absolute(v.empty() ? fallback : fs::path(v)).lexically_normal();
    cfg.set(key, p.string());
    return p;
}

void require_artifact(const fs::path& p, std::string_view what, std::string_view producer) {
    require(fs::exists(p), ErrorKind::MissingArtifact, "{} not found at {} (run `vaerepa {}` first)", what, p.string(),
            producer);
}

void write_run_meta(const fs::path& dir, const std::string& sub, const KvConfig& cfg) {
    fs::create_directories(dir);
    std::ofstream os(dir / "run.meta");
    require(static_cast<bool>(os), ErrorKind::Io, "cannot write {}", (dir / "run.meta").string());
    os << "# vaerepa " << sub << "\n" << cfg.render();
}

data::DatasetSpec dataset_spec(const KvConfig& c) {
    return {size_key(c, "count"), size_key(c, "image_size"), size_key(c, "classes"), c.u64("seed")};
}

vae::VaeConfig vae_config(const KvConfig& c) {
    KvConfig kv;
    for (const char* k : {"latent_channels", "vae_downsample", "vae_widths", "kl_weight", "vae_steps", "vae_batch",
                          "vae_lr", "seed"})
        kv.set(k, c.str(k));
    return vae::VaeConfig::from_kv(kv);
}

trainer::TrainConfig train_config(const KvConfig& c, const vae::FeatureCache* cache) {
    trainer::TrainConfig t;
    auto& b = t.backbone;
    if (cache) {
        b.channels = cache->channels;
        b.height = cache->height;
        b.width = cache->width;
    } else {
        const std::size_t down = size_key(c, "vae_downsample");
        require(down > 0, ErrorKind::Config, "vae_downsample must be positive");
        b.channels = size_key(c, "latent_channels");
        b.height = b.width = size_key(c, "image_size") / down;
    }
    b.patch = size_key(c, "patch");
    b.depth = size_key(c, "depth");
    b.dim = size_key(c, "width");
    b.heads = size_key(c, "heads");
    b.classes = size_key(c, "classes");
    b.time_freq_dim = size_key(c, "time_freq_dim");
    b.label_dropout = c.real("label_dropout");
    b.seed = c.u64("seed");
    t.align.objective = alignment::parse_objective(c.str("objective"));
    t.align.beta = c.real("beta");
    t.align.lambda = c.real("lambda");
    t.align.depth = size_key(c, "align_depth");
    t.align.t_lo = c.real("t_lo");
    t.align.t_hi = c.real("t_hi");
    t.proj_layers = size_key(c, "proj_layers");
    t.proj_hidden = size_key(c, "proj_hidden");
    t.lr = c.real("lr");
    t.weight_decay = c.real("weight_decay");
    t.batch = size_key(c, "batch");
    t.iters = size_key(c, "iters");
    t.ema_decay = c.real("ema_decay");
    t.seed = c.u64("seed");
    t.log_every = size_key(c, "log_every");
    t.ckpt_every = size_key(c, "ckpt_every");
    t.validate();
    return t;
}

sampler::SampleConfig sample_config(const KvConfig& c) {
    sampler::SampleConfig s;
    s.solver = sampler::parse_solver(c.str("solver"));
    s.steps = size_key(c, "steps");
    s.cfg_scale = c.real("cfg_scale");
    s.labels = c.int_list("sample_labels");
    s.t_min = c.real("t_min");
    s.seed = c.u64("seed");
    s.count = size_key(c, "sample_count");
    s.diffusion_scale = c.real("diffusion_scale");
    s.validate();
    return s;
}

RgbImage image_grid(const Tensor<float>& images, std::size_t count, std::size_t cols) {
    const std::size_t s = images.dim(2), per = 3 * s * s;
    std::vector<RgbImage> tiles;
    for (std::size_t i = 0; i < std::min(count, images.dim(0)); ++i)
        tiles.push_back(data::tensor_to_image(images.span().subspan(i * per, per), s));
    return upscale(tile(tiles, cols), 2);
}

Tensor<float> dataset_images(const data::Dataset& ds, std::size_t count) {
    const std::size_t n = std::min(count, ds.samples.size()), per = 3 * ds.size * ds.size;
    Tensor<float> out({n, 3, ds.size, ds.size});
    for (std::size_t i = 0; i < n; ++i) std::copy_n(ds.samples[i].pixels.data(), per, out.data() + i * per);
    return out;
}

// ---------------------------------------------------------------- commands

void cmd_gen_data(KvConfig& cfg, const fs::path& out) {
    const fs::path dir = out / "data";
    write_run_meta(dir, "gen-data", cfg);
    const auto spec = dataset_spec(cfg);
    const std::size_t down = size_key(cfg, "vae_downsample");
    data::DatasetSpec eval_spec = spec;
    eval_spec.count = size_key(cfg, "eval_count");
    eval_spec.seed = derive_seed(spec.seed, kTagEval);

    data::Dataset train, held_out;
    if (cfg.str("data_dir").empty()) {
        spec.validate(down);
        train = data::generate_shapes(spec);
        if (eval_spec.count) held_out = data::generate_shapes(eval_spec);
    } else {
        data::Dataset all = data::load_image_dir(cfg.str("data_dir"), spec.size);
        require(eval_spec.count < all.samples.size(), ErrorKind::Config, "eval_count {} leaves no training images",
                eval_spec.count);
        std::vector<std::size_t> order(all.samples.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        Philox rng(derive_seed(spec.seed, kTagEval));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        std::sort(order.begin(), order.begin() + std::ptrdiff_t(eval_spec.count));
        std::sort(order.begin() + std::ptrdiff_t(eval_spec.count), order.end());
        train = held_out = data::Dataset{all.size, all.classes, all.seed, {}};
        for (std::size_t i = 0; i < order.size(); ++i)
            (i < eval_spec.count ? held_out : train).samples.push_back(all.samples[order[i]]);
        require(all.classes == spec.classes, ErrorKind::Config, "{} holds {} class folders but classes = {}",
                cfg.str("data_dir"), all.classes, spec.classes);
    }
    data::save_dataset(dir / "train", train);
    if (!held_out.samples.empty()) data::save_dataset(dir / "eval", held_out);
    write_png(dir / "preview.png", image_grid(dataset_images(train, 64), 64, 8));
    note("gen-data: {} training and {} held-out images in {}", train.samples.size(), held_out.samples.size(),
         dir.string());
}

void cmd_train_vae(KvConfig& cfg, const fs::path& out) {
    const fs::path data_dir = input(cfg, "data", out / "data");
    require_artifact(data_dir / "train" / "meta", "training images", "gen-data");
    const fs::path dir = out / "vae";
    write_run_meta(dir, "train-vae", cfg);
    const data::Dataset train = data::load_dataset(data_dir / "train");
    const vae::VaeConfig vcfg = vae_config(cfg);
    const std::size_t log_every = std::max<std::size_t>(size_key(cfg, "log_every"), 1);
    vae::VaeTrainReport report;
    const vae::Vae model = vae::train_vae(vcfg, train, &report, [&](std::size_t step, double loss) {
        if ((step + 1) % log_every == 0) note("train-vae: step {} loss {:.6f}", step + 1, loss);
    });
    model.save(dir / "vae.vrck");
    {
        std::ofstream os(dir / "loss.csv");
        os << "step,loss\n";
        for (std::size_t i = 0; i < report.losses.size(); ++i) os << fmt::format("{},{}\n", i + 1, report.losses[i]);
    }
    const bool have_eval = fs::exists(data_dir / "eval" / "meta");
    const data::Dataset probe = have_eval ? data::load_dataset(data_dir / "eval") : train;
    const double psnr = vae::reconstruction_psnr(model, probe);
    KvConfig metrics;
    metrics.set("psnr_db", fmt::format("{}", psnr));
    metrics.set("psnr_split", have_eval ? "eval" : "train");
    metrics.set("scale", fmt::format("{}", model.scale()));
    metrics.save(dir / "metrics.txt");

    const Tensor<float> x = dataset_images(probe, 8);
    const Tensor<float> r = model.decode_batch(model.encode_batch(x));
    Tensor<float> both({2 * x.dim(0), 3, x.dim(2), x.dim(3)});
    std::copy(x.span().begin(), x.span().end(), both.data());
    std::copy(r.span().begin(), r.span().end(), both.data() + x.size());
    write_png(dir / "reconstructions.png", image_grid(both, both.dim(0), x.dim(0)));
    note("train-vae: reconstruction PSNR {:.2f} dB ({}), latent scale {:.4f}", psnr, have_eval ? "eval" : "train",
         model.scale());
}

void cmd_extract(KvConfig& cfg, const fs::path& out) {
    const fs::path data_dir = input(cfg, "data", out / "data");
    const fs::path vae_path = input(cfg, "vae", out / "vae" / "vae.vrck");
    require_artifact(data_dir / "train" / "meta", "training images", "gen-data");
    require_artifact(vae_path, "VAE weights", "train-vae");
    const fs::path dir = out / "features";
    write_run_meta(dir, "extract-features", cfg);
    const vae::Vae model = vae::Vae::load(vae_path);
    const auto train = vae::extract_features(model, data::load_dataset(data_dir / "train"), dir / "train.vrfc");
    std::size_t n_eval = 0;
    if (fs::exists(data_dir / "eval" / "meta"))
        n_eval = vae::extract_features(model, data::load_dataset(data_dir / "eval"), dir / "eval.vrfc").count();
    note("extract-features: {} + {} latents of shape {} (scale {:.4f})", train.count(), n_eval,
         shape_str(train.latent_shape()), train.scale);
}

void cmd_train(KvConfig& cfg, const fs::path& out) {
    train_config(cfg, nullptr);  // bad values fail before missing inputs
    const fs::path feat = input(cfg, "features", out / "features" / "train.vrfc");
    require_artifact(feat, "feature cache", "extract-features");
    if (!cfg.str("resume").empty()) {
        const fs::path r = input(cfg, "resume", {});
        require_artifact(r, "resume checkpoint", "train");
    }
    const fs::path dir = out / "train";
    write_run_meta(dir, "train", cfg);
    const vae::FeatureCache cache = vae::FeatureCache::read(feat);
    const trainer::TrainConfig tcfg = train_config(cfg, &cache);
    const std::size_t log_every = std::max<std::size_t>(tcfg.log_every, 1);
    trainer::RunOptions opt;
    opt.out_dir = dir;
    if (!cfg.str("resume").empty()) opt.resume_from = cfg.str("resume");
    opt.progress = [&](std::uint64_t step, const trainer::StepLosses& l) {
        if (step % log_every == 0)
            note("train: step {} l_phi {:.5f} l_align {:.5f} l_total {:.5f}", step, l.phi, l.align, l.total);
    };
    const trainer::RunResult res = trainer::run(tcfg, cache, opt);
    KvConfig metrics;
    metrics.set("steps", std::to_string(res.history.size()));
    metrics.set("seconds_per_step", fmt::format("{}", res.seconds_per_step));
    metrics.set("backbone_params", std::to_string(backbone::count_params(tcfg.backbone)));
    metrics.set("projector_params", std::to_string(tcfg.projector().param_count()));
    metrics.save(dir / "metrics.txt");
    note("train: {} steps, {:.3f} s/step, checkpoint {}", res.history.size(), res.seconds_per_step,
         res.final_checkpoint.string());
}

void cmd_sample(KvConfig& cfg, const fs::path& out) {
    sample_config(cfg);
    const fs::path ckpt = input(cfg, "checkpoint", out / "train" / "final.vrck");
    require_artifact(ckpt, "training checkpoint", "train");
    const fs::path dir = out / "sample";
    write_run_meta(dir, "sample", cfg);
    const Checkpoint ck = Checkpoint::load(ckpt);
    const backbone::Backbone<float> model = trainer::load_backbone(ck, cfg.boolean("use_ema"));
    const auto& b = model.config();
    const sampler::SampleConfig scfg = sample_config(cfg);
    const auto labels = sampler::resolve_labels(scfg, b.classes, b.null_label());
    const sampler::NetworkField field(model, scfg.cfg_scale);
    const auto t0 = std::chrono::steady_clock::now();
    const Tensor<double> gen = sampler::sample(field, scfg, labels);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    vae::FeatureCache fc;
    fc.channels = b.channels;
    fc.height = b.height;
    fc.width = b.width;
    fc.scale = static_cast<float>(ck.meta.real("cache_scale"));
    for (std::size_t i = 0; i < scfg.count; ++i) {
        fc.ids.push_back(i);
        fc.labels.push_back(static_cast<std::uint16_t>(labels[i]));
    }
    fc.latents.assign(gen.span().begin(), gen.span().end());
    fc.write(dir / "samples.vrfc");
    note("sample: {} latents ({} solver, {} steps, w = {}) in {:.1f} s", scfg.count,
         sampler::solver_name(scfg.solver), scfg.steps, scfg.cfg_scale, secs);

    if (cfg.boolean("decode")) {
        const fs::path vae_path = input(cfg, "vae", out / "vae" / "vae.vrck");
        if (!fs::exists(vae_path)) {
            note("sample: no VAE weights at {}; skipping the decoded grid", vae_path.string());
            return;
        }
        const vae::Vae v = vae::Vae::load(vae_path);
        const std::size_t n = std::min(size_key(cfg, "grid_count"), scfg.count);
        Tensor<float> z({n, b.channels, b.height, b.width});
        std::copy_n(fc.latents.begin(), z.size(), z.data());
        write_png(dir / "grid.png", image_grid(v.decode_batch(z), n, 8));
    }
}

eval::FlopReport flops_for(const KvConfig& cfg, const fs::path& ckpt) {
    trainer::TrainConfig t;
    if (fs::exists(ckpt)) {
        t = trainer::TrainConfig::from_kv(Checkpoint::load(ckpt).meta);
    } else {
        t = train_config(cfg, nullptr);
    }
    return eval::flop_report(t.backbone, t.projector(), t.batch);
}

void cmd_eval(KvConfig& cfg, const fs::path& out) {
    const fs::path samples = input(cfg, "samples", out / "sample" / "samples.vrfc");
    const fs::path reference = input(cfg, "reference", out / "features" / "eval.vrfc");
    const fs::path ckpt = input(cfg, "checkpoint", out / "train" / "final.vrck");
    require_artifact(samples, "sampled latents", "sample");
    require_artifact(reference, "held-out feature cache", "extract-features");
    const fs::path dir = out / "eval";
    write_run_meta(dir, "eval", cfg);
    const vae::FeatureCache a = vae::FeatureCache::read(samples);
    const vae::FeatureCache r = vae::FeatureCache::read(reference);
    require(a.latent_shape() == r.latent_shape(), ErrorKind::Shape, "sample latents {} and reference {} differ",
            shape_str(a.latent_shape()), shape_str(r.latent_shape()));
    eval::MetricsReport m;
    const std::size_t d = a.latent_size();
    m.toy_fid = eval::toy_fid(eval::as_matrix(std::span<const float>(a.latents), a.count(), d),
                              eval::as_matrix(std::span<const float>(r.latents), r.count(), d));
    m.sample_count = a.count();
    m.reference_count = r.count();
    m.feature_dim = d;
    m.flops = flops_for(cfg, ckpt);
    const fs::path timing = ckpt.parent_path() / "metrics.txt";
    if (fs::exists(timing)) {
        const KvConfig t = KvConfig::load(timing);
        if (t.has("seconds_per_step")) m.seconds_per_step = t.real("seconds_per_step");
    }
    m.to_kv().save(dir / "metrics.txt");
    note("eval: toy-FID {:.4f} ({} samples vs {} reference, d = {}); projector overhead {:.2f}%", m.toy_fid,
         m.sample_count, m.reference_count, d, 100.0 * m.flops.overhead());
}

void cmd_viz(KvConfig& cfg, const fs::path& out) {
    const fs::path ckpt = input(cfg, "checkpoint", out / "train" / "final.vrck");
    const fs::path reference = input(cfg, "reference", out / "features" / "eval.vrfc");
    require_artifact(ckpt, "training checkpoint", "train");
    require_artifact(reference, "held-out feature cache", "extract-features");
    const fs::path dir = out / "viz";
    write_run_meta(dir, "viz-pca", cfg);
    const Checkpoint ck = Checkpoint::load(ckpt);
    const backbone::Backbone<float> model = trainer::load_backbone(ck, cfg.boolean("use_ema"));
    const auto& b = model.config();
    const vae::FeatureCache cache = vae::FeatureCache::read(reference);
    require(cache.latent_shape() == Shape{b.channels, b.height, b.width}, ErrorKind::Shape,
            "reference latents {} do not match the backbone", shape_str(cache.latent_shape()));

    std::set<std::size_t> depths;
    for (auto k : cfg.int_list("viz_depths")) {
        require(k >= 1, ErrorKind::Config, "viz_depths entries must be >= 1");
        b.validate_tap(std::size_t(k));
        depths.insert(std::size_t(k));
    }
    std::vector<double> times;
    for (const auto& s : split(cfg.str("viz_t"), ',')) {
        if (s.empty()) continue;
        KvConfig one;
        one.set("t", s);
        times.push_back(one.real("t"));
        require(times.back() >= 0.0 && times.back() <= 1.0, ErrorKind::Config, "viz_t values must lie in [0, 1]");
    }
    const std::size_t n = std::min(size_key(cfg, "viz_count"), cache.count());
    require(n >= 1 && !depths.empty() && !times.empty(), ErrorKind::Config, "viz-pca needs samples, depths and times");

    const std::size_t d = cache.latent_size();
    std::vector<Tensor<float>> hidden_maps, latent_maps;
    for (std::size_t i = 0; i < n; ++i)
        latent_maps.emplace_back(cache.latent_shape(),
                                 std::vector<float>(cache.latent(i).begin(), cache.latent(i).end()));
    for (std::size_t k : depths) {
        for (double t : times) {
            for (std::size_t i = 0; i < n; ++i) {
                Philox rng(derive_seed(cfg.u64("seed"), kTagViz), i);
                Tensor<float> eps(cache.latent_shape()), z(cache.latent_shape());
                for (std::size_t j = 0; j < d; ++j) {
                    eps[j] = static_cast<float>(rng.normal());
                    z[j] = cache.latent(i)[j];
                }
                const auto y = interpolant::corrupt(z, eps, t).y;
                const std::vector<double> ts{t};
                const std::vector<std::size_t> ls{cache.labels[i]};
                const auto res = model.forward(y.reshaped({1, b.channels, b.height, b.width}), ts, ls, {k});
                hidden_maps.push_back(eval::token_map(res.hidden.at(k), b.grid_h(), b.grid_w()));
            }
        }
    }
    const auto save_grid = [&](const eval::PcaResult& r, std::size_t cols, const fs::path& path) {
        for (const auto& w : r.warnings) note("viz-pca: {}", w);
        const std::size_t factor = std::max<std::size_t>(1, 64 / std::max(r.images[0].width, r.images[0].height));
        std::vector<RgbImage> up;
        for (const auto& img : r.images) up.push_back(upscale(img, factor));
        write_png(path, tile(up, cols, 2));
    };
    save_grid(eval::pca_viz(hidden_maps), n, dir / "hidden_pca.png");
    save_grid(eval::pca_viz(latent_maps), n, dir / "latent_pca.png");
    std::ofstream legend(dir / "layout.txt");
    legend << "hidden_pca.png: one row per (depth, t), columns are samples\n";
    for (std::size_t k : depths)
        for (double t : times) legend << fmt::format("depth {} t {}\n", k, t);
    legend << "latent_pca.png: clean VAE latents of the same samples\n";
    note("viz-pca: {} hidden maps and {} latent maps in {}", hidden_maps.size(), latent_maps.size(), dir.string());
}

void cmd_flops(KvConfig& cfg, const fs::path& out) {
    const fs::path dir = out / "flops";
    write_run_meta(dir, "flops", cfg);
    const trainer::TrainConfig t = train_config(cfg, nullptr);
    const eval::FlopReport r = eval::flop_report(t.backbone, t.projector(), t.batch);
    KvConfig kv;
    kv.set("batch", std::to_string(r.batch));
    kv.set("patch_embed_macs", std::to_string(r.patch_embed));
    kv.set("time_embed_macs", std::to_string(r.time_embed));
    kv.set("adaln_macs", std::to_string(r.adaln));
    kv.set("qkv_macs", std::to_string(r.qkv));
    kv.set("attention_macs", std::to_string(r.attention));
    kv.set("attn_proj_macs", std::to_string(r.attn_proj));
    kv.set("mlp_macs", std::to_string(r.mlp));
    kv.set("final_layer_macs", std::to_string(r.final_layer));
    kv.set("projector_macs", std::to_string(r.projector));
    kv.set("backbone_flops", std::to_string(r.backbone_flops()));
    kv.set("projector_flops", std::to_string(r.projector_flops()));
    kv.set("total_flops", std::to_string(r.total_flops()));
    kv.set("overhead_fraction", fmt::format("{}", r.overhead()));
    kv.set("backbone_params", std::to_string(r.backbone_params));
    kv.set("projector_params", std::to_string(r.projector_params));
    kv.set("external_params", std::to_string(r.external_params));
    kv.save(dir / "report.txt");
    note("flops: backbone {} FLOPs, projector {} FLOPs per batch of {} (overhead {:.2f}%)", r.backbone_flops(),
         r.projector_flops(), r.batch, 100.0 * r.overhead());
}

void cmd_ablate(KvConfig& cfg, const fs::path& out) {
    train_config(cfg, nullptr);
    trainer::parse_axes(cfg.str("axes"));
    const fs::path feat = input(cfg, "features", out / "features" / "train.vrfc");
    const fs::path reference = input(cfg, "reference", out / "features" / "eval.vrfc");
    require_artifact(feat, "feature cache", "extract-features");
    require_artifact(reference, "held-out feature cache", "extract-features");
    const fs::path dir = out / "ablate";
    write_run_meta(dir, "ablate", cfg);
    const auto axes = trainer::parse_axes(cfg.str("axes"));
    const auto mode = trainer::parse_ablate_mode(cfg.str("ablate_mode"));
    const vae::FeatureCache train = vae::FeatureCache::read(feat);
    const vae::FeatureCache ref = vae::FeatureCache::read(reference);
    KvConfig base_kv = cfg;
    base_kv.set("iters", cfg.str("ablate_iters"));
    const trainer::TrainConfig base = train_config(base_kv, &train);
    trainer::AblationOptions opt;
    KvConfig skv = cfg;
    skv.set("sample_count", cfg.str("ablate_sample_count"));
    skv.set("steps", cfg.str("ablate_steps"));
    opt.sample = sample_config(skv);
    opt.on_row = [](const trainer::AblationRow& r) {
        if (r.ok)
            note("ablate: run {} {}={} toy-FID {:.4f}", r.run, r.axis, r.value, r.toy_fid);
        else
            note("ablate: run {} {}={} failed: {}", r.run, r.axis, r.value, r.message);
    };
    const auto rows = trainer::ablate(base, axes, mode, train, ref, opt);
    trainer::write_ablation_csv(dir / "results.csv", rows);
    note("ablate: {} rows in {}", rows.size(), (dir / "results.csv").string());
}

}  // namespace

std::span<const KeySpec> config_keys() { return kKeys; }

std::span<const char* const> subcommands() { return kSubcommands; }

KvConfig default_config() {
    KvConfig kv;
    for (const auto& k : kKeys) kv.set(k.name, k.default_value);
    return kv;
}

void check_keys(const KvConfig& kv, const std::string& origin) {
    for (const auto& [key, value] : kv.values()) {
        const bool known = std::any_of(std::begin(kKeys), std::end(kKeys), [&](const KeySpec& k) { return key == k.name; });
        if (known) continue;
        std::string valid;
        for (const auto& k : kKeys) valid += (valid.empty() ? "" : ", ") + std::string(k.name);
        fail(ErrorKind::Config, "{}: unknown config key `{}`; valid keys: {}", origin, key, valid);
    }
}

KvConfig resolve_config(const std::optional<fs::path>& file, const std::vector<std::string>& overrides,
                        std::optional<std::uint64_t> seed) {
    KvConfig cfg = default_config();
    if (file) {
        require(fs::exists(*file), ErrorKind::Config, "config file {} does not exist", file->string());
        const KvConfig f = KvConfig::load(*file);
        check_keys(f, file->string());
        for (const auto& [k, v] : f.values()) cfg.set(k, v);
    }
    for (const std::string& o : overrides) {
        const auto eq = o.find('=');
        require(eq != std::string::npos, ErrorKind::Config, "--set expects key=value, got `{}`", o);
        KvConfig one;
        one.set(trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
        check_keys(one, "--set");
        cfg.set(trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
    }
    if (seed) cfg.set("seed", std::to_string(*seed));
    return cfg;
}

void dispatch(const std::string& sub, KvConfig cfg, const fs::path& out) {
    const fs::path root = fs::absolute(out).lexically_normal();
    if (sub == "gen-data") return cmd_gen_data(cfg, root);
    if (sub == "train-vae") return cmd_train_vae(cfg, root);
    if (sub == "extract-features") return cmd_extract(cfg, root);
    if (sub == "train") return cmd_train(cfg, root);
    if (sub == "sample") return cmd_sample(cfg, root);
    if (sub == "eval") return cmd_eval(cfg, root);
    if (sub == "viz-pca") return cmd_viz(cfg, root);
    if (sub == "flops") return cmd_flops(cfg, root);
    if (sub == "ablate") return cmd_ablate(cfg, root);
    fail(ErrorKind::Config, "unknown subcommand `{}`", sub);
}

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Config:
        case ErrorKind::Domain:
        case ErrorKind::Shape: return 2;
        case ErrorKind::MissingArtifact: return 3;
        case ErrorKind::Numeric: return 4;
        case ErrorKind::Io: return 1;
    }
    return 1;
}

int run_main(int argc, char** argv) {
    CLI::App app{"Latent diffusion with VAE-feature alignment, desk scale"};
    app.require_subcommand(1);
    std::optional<std::string> config;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::string out = "runs";
    bool list_keys = false;

    std::string footer = "Config keys (key = default):\n";
    for (const auto& k : kKeys) footer += fmt::format("  {} = {}    {}\n", k.name, k.default_value, k.help);

    for (std::size_t i = 0; i < std::size(kSubcommands); ++i) {
        CLI::App* sub = app.add_subcommand(kSubcommands[i], kSubcommandHelp[i]);
        sub->add_option("--config", config, "flat key = value config file");
        sub->add_option("--set", sets, "override one key (key=value); repeatable")
            ->expected(1)
            ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
        sub->add_option("--seed", seed, "override the base seed");
        sub->add_option("--out", out, "output root directory")->capture_default_str();
        sub->add_flag("--list-keys", list_keys, "print the config keys and exit");
        sub->footer(footer);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    const std::string sub = app.get_subcommands().front()->get_name();
    if (list_keys) {
        fmt::print("{}", footer);
        return 0;
    }
    try {
        KvConfig cfg = resolve_config(config ? std::optional<fs::path>(*config) : std::nullopt, sets, seed);
        dispatch(sub, std::move(cfg), out);
        return 0;
    } catch (const Error& e) {
        fmt::print(stderr, "vaerepa {}: error: {}\n", sub, e.what());
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        fmt::print(stderr, "vaerepa {}: error: {}\n", sub, e.what());
        return 1;
    }
}

}  // namespace vaerepa::cli
