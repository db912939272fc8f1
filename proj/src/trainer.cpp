// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

#include "vaerepa/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "vaerepa/ad/ops.hpp"
#include "vaerepa/interpolant.hpp"

namespace vaerepa::trainer {

using ad::Var;

namespace {

constexpr std::uint64_t kTagBatch = 0x54424154;  // "TBAT"
constexpr std::uint64_t kTagStep = 0x54535450;   // "TSTP"
constexpr std::uint64_t kTagProj = 0x5450524A;   // "TPRJ"

}  // namespace

alignment::ProjectorConfig TrainConfig::projector() const {
    alignment::ProjectorConfig p;
    p.in_dim = backbone.dim;
    p.hidden = proj_hidden ? proj_hidden : backbone.dim;
    p.layers = proj_layers;
    p.out_dim = backbone.token_dim();
    p.seed = derive_seed(seed, kTagProj);
    return p;
}

void TrainConfig::validate() const {
    backbone.validate();
    align.validate();
    backbone.validate_tap(align.depth);
    projector().validate();
    require(lr > 0.0, ErrorKind::Config, "learning rate must be positive");
    require(weight_decay >= 0.0, ErrorKind::Config, "weight decay must be non-negative");
    require(batch >= 1, ErrorKind::Config, "batch size must be >= 1");
    require(ema_decay >= 0.0 && ema_decay <= 1.0, ErrorKind::Config, "ema_decay must lie in [0, 1]");
}

void TrainConfig::to_kv(KvConfig& kv) const {
    backbone.to_kv(kv);
    kv.set("objective", std::string(alignment::objective_name(align.objective)));
    kv.set("beta", fmt::format("{}", align.beta));
    kv.set("lambda", fmt::format("{}", align.lambda));
    kv.set("align_depth", std::to_string(align.depth));
    kv.set("t_lo", fmt::format("{}", align.t_lo));
    kv.set("t_hi", fmt::format("{}", align.t_hi));
    kv.set("proj_layers", std::to_string(proj_layers));
    kv.set("proj_hidden", std::to_string(proj_hidden));
    kv.set("lr", fmt::format("{}", lr));
    kv.set("weight_decay", fmt::format("{}", weight_decay));
    kv.set("batch", std::to_string(batch));
    kv.set("iters", std::to_string(iters));
    kv.set("ema_decay", fmt::format("{}", ema_decay));
    kv.set("seed", std::to_string(seed));
    kv.set("log_every", std::to_string(log_every));
    kv.set("ckpt_every", std::to_string(ckpt_every));
}

TrainConfig TrainConfig::from_kv(const KvConfig& kv) {
    TrainConfig c;
    c.backbone = backbone::BackboneConfig::from_kv(kv);
    c.align.objective = alignment::parse_objective(kv.str("objective"));
    c.align.beta = kv.real("beta");
    c.align.lambda = kv.real("lambda");
    c.align.depth = static_cast<std::size_t>(kv.integer("align_depth"));
    c.align.t_lo = kv.real("t_lo");
    c.align.t_hi = kv.real("t_hi");
    c.proj_layers = static_cast<std::size_t>(kv.integer("proj_layers"));
    c.proj_hidden = static_cast<std::size_t>(kv.integer("proj_hidden"));
    c.lr = kv.real("lr");
    c.weight_decay = kv.real("weight_decay");
    c.batch = static_cast<std::size_t>(kv.integer("batch"));
    c.iters = static_cast<std::size_t>(kv.integer("iters"));
    c.ema_decay = kv.real("ema_decay");
    c.seed = kv.u64("seed");
    c.log_every = static_cast<std::size_t>(kv.integer("log_every"));
    c.ckpt_every = static_cast<std::size_t>(kv.integer("ckpt_every"));
    c.validate();
    return c;
}

template <typename T>
StepInputs<T> make_step_inputs(const backbone::BackboneConfig& bcfg, const alignment::AlignmentConfig& acfg,
                               std::span<const T> z, std::span<const std::size_t> labels, Philox& rng) {
    const std::size_t b = labels.size(), d = bcfg.latent_size();
    require(z.size() == b * d, ErrorKind::Shape, "batch holds {} values, expected {} x {}", z.size(), b, d);
    StepInputs<T> in;
    in.t.resize(b);
    in.labels.assign(labels.begin(), labels.end());
    in.mask.resize(b);
    for (std::size_t i = 0; i < b; ++i) {
        in.t[i] = rng.uniform();
        in.mask[i] = acfg.in_range(in.t[i]) ? T(1) : T(0);
    }
    for (std::size_t i = 0; i < b; ++i)
        if (rng.uniform() < bcfg.label_dropout) in.labels[i] = bcfg.null_label();

    std::vector<T> eps(b * d), y(b * d), v(b * d);
    for (auto& e : eps) e = T(rng.normal());
    const interpolant::Schedule sched;
    for (std::size_t i = 0; i < b; ++i) {
        const auto zi = z.subspan(i * d, d);
        const auto ei = std::span<const T>(eps).subspan(i * d, d);
        interpolant::corrupt_into<T>(zi, ei, in.t[i], sched, std::span<T>(y).subspan(i * d, d));
        interpolant::velocity_target_into<T>(zi, ei, in.t[i], sched, std::span<T>(v).subspan(i * d, d));
    }
    const auto tok = [&](std::span<const T> x) {
        return backbone::patchify<T>(x, b, bcfg.channels, bcfg.height, bcfg.width, bcfg.patch);
    };
    in.y = tok(y);
    in.v_target = tok(v);
    in.z = tok(z);
    return in;
}

template <typename T>
ObjectiveVars<T> build_objective(ad::Graph<T>& g, backbone::Backbone<T>& model, alignment::Projector<T>& proj,
                                 const alignment::AlignmentConfig& acfg, const StepInputs<T>& in) {
    ad::Binder<T> bb(g, model.params());
    ad::Binder<T> pb(g, proj.params());
    const auto out = model.forward_graph(bb, g.constant_ref(in.y), in.t, in.labels, {acfg.depth});
    ObjectiveVars<T> o;
    o.phi = ad::mse(g, out.velocity, in.v_target);
    Var f_sit = proj.forward_graph(pb, out.hidden.at(acfg.depth));
    o.align = alignment::align_loss_graph<T>(g, acfg, f_sit, in.z, model.config().tokens(), in.mask);
    o.total = ad::add(g, o.phi, ad::scale(g, o.align, T(acfg.lambda)));
    return o;
}

Trainer::Trainer(TrainConfig cfg, const vae::FeatureCache& cache)
    : cfg_((cfg.validate(), std::move(cfg))),
      cache_(cache),
      model_(cfg_.backbone),
      proj_(cfg_.projector()),
      ema_(model_.params()),
      opt_model_(model_.params(), {cfg_.lr, 0.9, 0.999, 1e-8, cfg_.weight_decay}),
      opt_proj_(proj_.params(), {cfg_.lr, 0.9, 0.999, 1e-8, cfg_.weight_decay}),
      sampler_(std::max<std::size_t>(cache.count(), 1), cfg_.batch, derive_seed(cfg_.seed, kTagBatch)) {
    const auto& b = cfg_.backbone;
    require(cache.channels == b.channels && cache.height == b.height && cache.width == b.width, ErrorKind::Shape,
            "feature cache latents are [{},{},{}] but the backbone expects [{},{},{}]", cache.channels,
            cache.height, cache.width, b.channels, b.height, b.width);
    require(cache.count() > 0, ErrorKind::Config, "feature cache is empty");
    for (auto y : cache.labels)
        require(y < b.classes, ErrorKind::Config, "cache label {} exceeds class count {}", y, b.classes);
}

StepLosses Trainer::step() {
    const std::size_t d = cache_.latent_size();
    const auto idx = sampler_.batch(step_);
    std::vector<float> z(idx.size() * d);
    std::vector<std::size_t> labels(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto src = cache_.latent(idx[i]);
        std::copy(src.begin(), src.end(), z.begin() + i * d);
        labels[i] = cache_.labels[idx[i]];
    }
    Philox rng(derive_seed(cfg_.seed, kTagStep), step_);
    const StepInputs<float> in = make_step_inputs<float>(cfg_.backbone, cfg_.align, z, labels, rng);

    ad::Graph<float> g;
    ObjectiveVars<float> o;
    try {
        o = build_objective(g, model_, proj_, cfg_.align, in);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::Numeric) throw;
        fail(ErrorKind::Numeric, "step {}: {}", step_, e.what());
    }
    StepLosses l{g.scalar(o.phi), g.scalar(o.align), g.scalar(o.total)};
    require(std::isfinite(l.phi), ErrorKind::Numeric, "step {}: velocity loss is not finite ({})", step_, l.phi);
    require(std::isfinite(l.align), ErrorKind::Numeric, "step {}: alignment loss is not finite ({})", step_,
            l.align);
    require(std::isfinite(l.total), ErrorKind::Numeric, "step {}: total loss is not finite ({})", step_, l.total);

    model_.params().zero_grad();
    proj_.params().zero_grad();
    g.backward(o.total);
    opt_model_.step(model_.params());
    opt_proj_.step(proj_.params());
    ema_update(ema_, model_.params(), static_cast<float>(cfg_.ema_decay));
    ++step_;
    history_.push_back(l);
    return l;
}

backbone::Backbone<float> Trainer::ema_model() const {
    backbone::Backbone<float> m(cfg_.backbone);
    for (std::size_t i = 0; i < ema_.all().size(); ++i) m.params().all()[i].value = ema_.all()[i].value;
    return m;
}

Checkpoint Trainer::checkpoint() const {
    Checkpoint ck;
    ck.step = step_;
    cfg_.to_kv(ck.meta);
    ck.meta.set("kind", "train");
    ck.meta.set("cache_scale", fmt::format("{}", cache_.scale));
    ck.add_params("backbone.", model_.params());
    ck.add_params("ema.", ema_);
    ck.add_params("projector.", proj_.params());
    opt_model_.save(ck, "opt.backbone.");
    opt_proj_.save(ck, "opt.projector.");
    Tensor<float> hist({history_.size(), 3});
    for (std::size_t i = 0; i < history_.size(); ++i) {
        hist[3 * i] = history_[i].phi;
        hist[3 * i + 1] = history_[i].align;
        hist[3 * i + 2] = history_[i].total;
    }
    ck.add("history", std::move(hist));
    return ck;
}

void Trainer::save(const std::filesystem::path& path) const { checkpoint().save(path); }

void Trainer::restore(const Checkpoint& ck) {
    require(ck.meta.has("kind") && ck.meta.str("kind") == "train", ErrorKind::Io, "not a training checkpoint");
    const TrainConfig saved = TrainConfig::from_kv(ck.meta);
    KvConfig a, b;
    saved.to_kv(a);
    cfg_.to_kv(b);
    a.set("iters", "0");
    b.set("iters", "0");
    require(a.values() == b.values(), ErrorKind::Config,
            "checkpoint was written by a different configuration; only `iters` may change on resume");
    ck.load_params("backbone.", model_.params());
    ck.load_params("ema.", ema_);
    ck.load_params("projector.", proj_.params());
    opt_model_.load(ck, "opt.backbone.", ck.step);
    opt_proj_.load(ck, "opt.projector.", ck.step);
    const auto& hist = ck.get("history");
    require(hist.rank() == 2 && hist.dim(0) == ck.step && hist.dim(1) == 3, ErrorKind::Io,
            "checkpoint history does not match its step count");
    history_.clear();
    for (std::size_t i = 0; i < ck.step; ++i) history_.push_back({hist[3 * i], hist[3 * i + 1], hist[3 * i + 2]});
    step_ = ck.step;
}

backbone::Backbone<float> load_backbone(const Checkpoint& ck, bool use_ema) {
    require(ck.meta.has("kind") && ck.meta.str("kind") == "train", ErrorKind::Io, "not a training checkpoint");
    backbone::Backbone<float> m(backbone::BackboneConfig::from_kv(ck.meta));
    ck.load_params(use_ema ? "ema." : "backbone.", m.params());
    return m;
}

void write_loss_csv(const std::filesystem::path& path, std::span<const StepLosses> history) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    require(static_cast<bool>(os), ErrorKind::Io, "cannot write {}", path.string());
    os << "step,l_phi,l_align,l_total\n";
    for (std::size_t i = 0; i < history.size(); ++i)
        os << fmt::format("{},{},{},{}\n", i + 1, history[i].phi, history[i].align, history[i].total);
    require(static_cast<bool>(os), ErrorKind::Io, "failed writing {}", path.string());
}

double smoothed_phi(std::span<const StepLosses> history, std::size_t step, std::size_t window) {
    require(step >= 1 && step <= history.size() && window >= 1, ErrorKind::Domain,
            "smoothing window ending at step {} is outside the history of {} steps", step, history.size());
    const std::size_t lo = step > window ? step - window : 0;
    double acc = 0.0;
    for (std::size_t i = lo; i < step; ++i) acc += history[i].phi;
    return acc / double(step - lo);
}

RunResult run(const TrainConfig& cfg, const vae::FeatureCache& cache, const RunOptions& opt) {
    Trainer tr(cfg, cache);
    if (!opt.resume_from.empty()) tr.restore(Checkpoint::load(opt.resume_from));
    const auto ckpt_dir = opt.out_dir / "checkpoints";
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t first = tr.steps_done();
    while (tr.steps_done() < cfg.iters) {
        const StepLosses l = tr.step();
        if (opt.progress) opt.progress(tr.steps_done(), l);
        if (!opt.out_dir.empty() && cfg.ckpt_every && tr.steps_done() % cfg.ckpt_every == 0)
            tr.save(ckpt_dir / fmt::format("step_{:08d}.vrck", tr.steps_done()));
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    RunResult r;
    r.history = tr.history();
    r.seconds_per_step = tr.steps_done() > first ? secs / double(tr.steps_done() - first) : 0.0;
    if (!opt.out_dir.empty()) {
        write_loss_csv(opt.out_dir / "loss.csv", r.history);
        r.final_checkpoint = opt.out_dir / "final.vrck";
        tr.save(r.final_checkpoint);
    }
    return r;
}

#define VAEREPA_INSTANTIATE(T)                                                                                 \
    template StepInputs<T> make_step_inputs<T>(const backbone::BackboneConfig&, const alignment::AlignmentConfig&, \
                                               std::span<const T>, std::span<const std::size_t>, Philox&);      \
    template ObjectiveVars<T> build_objective<T>(ad::Graph<T>&, backbone::Backbone<T>&, alignment::Projector<T>&, \
                                                 const alignment::AlignmentConfig&, const StepInputs<T>&);

VAEREPA_INSTANTIATE(float)
VAEREPA_INSTANTIATE(double)
#undef VAEREPA_INSTANTIATE

}  // namespace vaerepa::trainer
