// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "support.hpp"
#include "vaerepa/ablate.hpp"
#include "vaerepa/optim.hpp"
#include "vaerepa/trainer.hpp"

using namespace vaerepa;
using namespace vaerepa::trainer;

namespace {

vae::FeatureCache synthetic_cache(const backbone::BackboneConfig& b, std::size_t n, std::uint64_t seed) {
    vae::FeatureCache fc;
    fc.channels = b.channels;
    fc.height = b.height;
    fc.width = b.width;
    fc.scale = 1.0f;
    Philox rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        fc.ids.push_back(i);
        fc.labels.push_back(static_cast<std::uint16_t>(i % b.classes));
    }
    fc.latents.resize(n * fc.latent_size());
    for (auto& v : fc.latents) v = float(rng.normal());
    return fc;
}

TrainConfig small_config() {
    TrainConfig c;
    c.backbone.dim = 16;
    c.backbone.depth = 2;
    c.backbone.heads = 2;
    c.backbone.time_freq_dim = 16;
    c.backbone.classes = 4;
    c.proj_layers = 2;
    c.batch = 4;
    c.iters = 10;
    c.lr = 1e-3;
    c.seed = 17;
    c.align.depth = 1;
    return c;
}

bool same_history(const std::vector<StepLosses>& a, const std::vector<StepLosses>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::memcmp(&a[i], &b[i], sizeof(StepLosses)) != 0) return false;
    return true;
}

template <typename T>
void randomize(ad::ParamStore<T>& store, std::uint64_t seed, double scale) {
    Philox rng(seed);
    for (auto& p : store.all())
        for (auto& v : p.value.vec()) v = T(scale * rng.normal());
}

struct Micro {
    backbone::Backbone<double> model;
    alignment::Projector<double> proj;
    StepInputs<double> in;
};

// D = 8, one block, latent [2, 4, 4], batch 2, every parameter random.
Micro micro(const alignment::AlignmentConfig& acfg, std::uint64_t seed) {
    backbone::BackboneConfig b;
    b.channels = 2;
    b.height = b.width = 4;
    b.patch = 2;
    b.depth = 1;
    b.dim = 8;
    b.heads = 2;
    b.classes = 3;
    b.time_freq_dim = 8;
    b.seed = seed;
    alignment::ProjectorConfig pc{8, 8, 2, b.token_dim(), seed + 1};
    Micro m{backbone::Backbone<double>(b), alignment::Projector<double>(pc), {}};
    randomize(m.model.params(), seed + 2, 0.3);
    randomize(m.proj.params(), seed + 3, 0.3);
    const auto z = test::random_tensor<double>({2, 2, 4, 4}, seed + 4);
    const std::vector<std::size_t> labels{0, 2};
    Philox rng(seed + 5);
    m.in = make_step_inputs<double>(b, acfg, z.span(), labels, rng);
    return m;
}

double total_loss(Micro& m, const alignment::AlignmentConfig& acfg) {
    ad::Graph<double> g(false);
    return g.scalar(build_objective(g, m.model, m.proj, acfg, m.in).total);
}

}  // namespace

TEST_CASE("analytic gradients match central differences on a micro model") {
    using alignment::Objective;
    for (Objective o : {Objective::SmoothL1, Objective::L1, Objective::L2, Objective::Cosine}) {
        for (double lambda : {0.0, 1.0}) {
            alignment::AlignmentConfig acfg;
            acfg.objective = o;
            acfg.lambda = lambda;
            acfg.depth = 1;
            acfg.beta = 0.5;
            Micro m = micro(acfg, 40);
            ad::Graph<double> g;
            const auto vars = build_objective(g, m.model, m.proj, acfg, m.in);
            m.model.params().zero_grad();
            m.proj.params().zero_grad();
            g.backward(vars.total);

            double worst = 0;
            std::size_t checked = 0;
            for (auto* store : {&m.model.params(), &m.proj.params()})
                for (auto& p : store->all())
                    for (std::size_t i = 0; i < p.value.size(); ++i) {
                        const double h = 1e-5, keep = p.value[i];
                        p.value[i] = keep + h;
                        const double up = total_loss(m, acfg);
                        p.value[i] = keep - h;
                        const double down = total_loss(m, acfg);
                        p.value[i] = keep;
                        const double fd = (up - down) / (2 * h), an = p.grad[i];
                        // Relative error, with gradients below 1e-4 compared absolutely at that scale.
                        worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-4}));
                        ++checked;
                    }
            INFO(alignment::objective_name(o), " lambda=", lambda, " params=", checked);
            CHECK(worst <= 1e-5);
        }
    }
}

TEST_CASE("total loss is affine in lambda with slope L_align") {
    alignment::AlignmentConfig acfg;
    acfg.depth = 1;
    Micro m = micro(acfg, 50);
    double vals[3], align = 0, phi = 0;
    for (int l = 0; l < 3; ++l) {
        acfg.lambda = l;
        ad::Graph<double> g(false);
        const auto v = build_objective(g, m.model, m.proj, acfg, m.in);
        vals[l] = g.scalar(v.total);
        align = g.scalar(v.align);
        phi = g.scalar(v.phi);
    }
    CHECK(align > 0);
    CHECK(vals[0] == phi);
    CHECK(vals[1] - vals[0] == doctest::Approx(align).epsilon(1e-12));
    CHECK(vals[2] - vals[1] == doctest::Approx(align).epsilon(1e-12));
}

TEST_CASE("lambda = 0: total equals L_phi exactly and the projector gets no gradient") {
    auto cfg = small_config();
    cfg.align.lambda = 0.0;
    const auto cache = synthetic_cache(cfg.backbone, 32, 1);
    Trainer tr(cfg, cache);
    const auto before = tr.projector().params().all().front().value;
    for (int i = 0; i < 3; ++i) {
        const auto l = tr.step();
        CHECK(l.total == l.phi);
        CHECK(l.align > 0.0f);
        for (const auto& p : tr.projector().params().all())
            for (float gv : p.grad.vec()) REQUIRE(gv == 0.0f);
    }
    CHECK(tr.projector().params().all().front().value == before);
}

TEST_CASE("lambda = 1: total is the plain sum") {
    auto cfg = small_config();
    const auto cache = synthetic_cache(cfg.backbone, 32, 1);
    Trainer tr(cfg, cache);
    const auto l = tr.step();
    CHECK(l.total == l.phi + l.align);
}

TEST_CASE("timestep gating zeroes the alignment loss outside the range") {
    alignment::AlignmentConfig acfg;
    acfg.depth = 1;
    acfg.t_lo = 0.5;
    acfg.t_hi = 1.0;
    Micro m = micro(acfg, 60);
    // Find a stream whose two draws of t both fall below 0.5.
    std::uint64_t stream = 0;
    for (;; ++stream) {
        Philox probe(123, stream);
        if (probe.uniform() < 0.5 && probe.uniform() < 0.5) break;
    }
    Philox rng(123, stream);
    const auto z = test::random_tensor<double>({2, 2, 4, 4}, 3);
    m.in = make_step_inputs<double>(m.model.config(), acfg, z.span(), std::vector<std::size_t>{0, 1}, rng);
    CHECK(m.in.mask == std::vector<double>{0.0, 0.0});
    ad::Graph<double> g(false);
    const auto v = build_objective(g, m.model, m.proj, acfg, m.in);
    CHECK(g.scalar(v.align) == 0.0);
    CHECK(g.scalar(v.total) == g.scalar(v.phi));
    for (std::size_t i = 0; i < m.in.t.size(); ++i) CHECK(m.in.mask[i] == (acfg.in_range(m.in.t[i]) ? 1.0 : 0.0));
}

TEST_CASE("EMA with decay 0 tracks the weights and with decay 1 stays at initialization") {
    auto cfg = small_config();
    const auto cache = synthetic_cache(cfg.backbone, 32, 2);
    cfg.ema_decay = 0.0;
    Trainer a(cfg, cache);
    cfg.ema_decay = 1.0;
    Trainer b(cfg, cache);
    const auto init = b.ema().all();
    for (int i = 0; i < 3; ++i) {
        a.step();
        b.step();
        for (std::size_t k = 0; k < a.ema().all().size(); ++k) {
            REQUIRE(a.ema().all()[k].value == a.model().params().all()[k].value);
            REQUIRE(b.ema().all()[k].value == init[k].value);
        }
    }
    cfg.ema_decay = 1.5;
    CHECK_THROWS_AS(Trainer(cfg, cache), Error);
}

TEST_CASE("same seed gives bit-identical loss histories; different seeds differ") {
    auto cfg = small_config();
    const auto cache = synthetic_cache(cfg.backbone, 32, 3);
    const auto a = run(cfg, cache, {}).history, b = run(cfg, cache, {}).history;
    CHECK(a.size() == 10);
    CHECK(same_history(a, b));
    cfg.seed = 18;
    CHECK_FALSE(same_history(a, run(cfg, cache, {}).history));
}

TEST_CASE("zero iterations returns the initial state and an empty curve") {
    auto cfg = small_config();
    cfg.iters = 0;
    const auto cache = synthetic_cache(cfg.backbone, 8, 3);
    const auto dir = test::scratch_dir("train_zero");
    const auto r = run(cfg, cache, {dir, {}, {}});
    CHECK(r.history.empty());
    std::ifstream in(dir / "loss.csv");
    std::string header, extra;
    std::getline(in, header);
    CHECK(header == "step,l_phi,l_align,l_total");
    CHECK_FALSE(static_cast<bool>(std::getline(in, extra)));
    const auto ck = Checkpoint::load(dir / "final.vrck");
    CHECK(ck.step == 0);
    Trainer fresh(cfg, cache);
    CHECK(ck.get("backbone.x_embed.w") == fresh.model().params().get("x_embed.w").value);
}

TEST_CASE("resume from a checkpoint reproduces the next ten steps bit for bit") {
    auto cfg = small_config();
    cfg.iters = 20;
    const auto cache = synthetic_cache(cfg.backbone, 32, 4);
    Trainer straight(cfg, cache);
    for (int i = 0; i < 20; ++i) straight.step();

    const auto dir = test::scratch_dir("train_resume");
    Trainer first(cfg, cache);
    for (int i = 0; i < 10; ++i) first.step();
    first.save(dir / "mid.vrck");

    Trainer resumed(cfg, cache);
    resumed.restore(Checkpoint::load(dir / "mid.vrck"));
    CHECK(resumed.steps_done() == 10);
    for (int i = 0; i < 10; ++i) resumed.step();
    CHECK(same_history(resumed.history(), straight.history()));
    for (std::size_t k = 0; k < straight.ema().all().size(); ++k) {
        CHECK(resumed.model().params().all()[k].value == straight.model().params().all()[k].value);
        CHECK(resumed.ema().all()[k].value == straight.ema().all()[k].value);
    }

    // run() with resume_from continues to the configured iteration count.
    const auto r = run(cfg, cache, {test::scratch_dir("train_resume_run"), dir / "mid.vrck", {}});
    CHECK(same_history(r.history, straight.history()));

    auto other = cfg;
    other.align.lambda = 0.5;
    Trainer mismatch(other, cache);
    CHECK_THROWS_AS(mismatch.restore(Checkpoint::load(dir / "mid.vrck")), Error);
}

TEST_CASE("checkpoint cadence and file naming") {
    auto cfg = small_config();
    cfg.iters = 6;
    cfg.ckpt_every = 3;
    const auto cache = synthetic_cache(cfg.backbone, 16, 4);
    const auto dir = test::scratch_dir("train_cadence");
    run(cfg, cache, {dir, {}, {}});
    CHECK(std::filesystem::exists(dir / "checkpoints" / "step_00000003.vrck"));
    CHECK(std::filesystem::exists(dir / "checkpoints" / "step_00000006.vrck"));
    CHECK(std::filesystem::exists(dir / "final.vrck"));
    const auto ck = Checkpoint::load(dir / "final.vrck");
    CHECK(ck.has("projector.l0.w"));
    CHECK(ck.has("ema.x_embed.w"));
    const auto m = load_backbone(ck, true);
    CHECK(m.params().get("x_embed.w").value == ck.get("ema.x_embed.w"));
}

TEST_CASE("shape mismatch and bad labels fail before the first step") {
    auto cfg = small_config();
    auto other = cfg.backbone;
    other.height = other.width = 4;
    const auto cache = synthetic_cache(other, 8, 5);
    try {
        Trainer tr(cfg, cache);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Shape);
    }
    auto labels = synthetic_cache(cfg.backbone, 8, 5);
    labels.labels[3] = 9;
    CHECK_THROWS_AS(Trainer(cfg, labels), Error);
}

TEST_CASE("non-finite loss raises a numeric error naming the step") {
    auto cfg = small_config();
    auto cache = synthetic_cache(cfg.backbone, 4, 6);
    for (auto& v : cache.latents) v = std::numeric_limits<float>::infinity();
    Trainer tr(cfg, cache);
    try {
        tr.step();
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Numeric);
        INFO(std::string(e.what()));
        CHECK(std::string(e.what()).find("step 0") != std::string::npos);
    }
}

TEST_CASE("velocity loss decreases during a short run") {
    auto cfg = small_config();
    cfg.backbone.dim = 32;
    cfg.batch = 16;
    cfg.iters = 400;
    const auto cache = synthetic_cache(cfg.backbone, 64, 7);
    const auto h = run(cfg, cache, {}).history;
    CHECK(smoothed_phi(h, 400, 50) < smoothed_phi(h, 50, 50));
}

TEST_CASE("smoothed_phi is a trailing mean") {
    std::vector<StepLosses> h;
    for (int i = 1; i <= 10; ++i) h.push_back({float(i), 0, float(i)});
    CHECK(smoothed_phi(h, 10, 4) == doctest::Approx((7 + 8 + 9 + 10) / 4.0));
    CHECK(smoothed_phi(h, 2, 4) == doctest::Approx(1.5));
    CHECK_THROWS_AS(smoothed_phi(h, 11, 4), Error);
}

TEST_CASE("config validation and key round trip") {
    auto cfg = small_config();
    KvConfig kv;
    cfg.to_kv(kv);
    const auto back = TrainConfig::from_kv(kv);
    KvConfig kv2;
    back.to_kv(kv2);
    CHECK(kv.values() == kv2.values());
    auto bad = cfg;
    bad.lr = 0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = cfg;
    bad.batch = 0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = cfg;
    bad.align.depth = 3;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = cfg;
    bad.proj_layers = 1;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("epoch sampler visits every index once per epoch and is reconstructible") {
    EpochSampler a(10, 4, 99), b(10, 4, 99);
    std::multiset<std::size_t> first_epoch;
    for (std::uint64_t s = 0; s < 5; ++s)
        for (std::size_t i : a.batch(s)) first_epoch.insert(i);
    // Steps 0-4 cover 20 positions, two full epochs.
    for (std::size_t i = 0; i < 10; ++i) CHECK(first_epoch.count(i) == 2);
    CHECK(a.batch(3) == b.batch(3));
    CHECK(a.batch(100) == b.batch(100));
}

TEST_CASE("adamw first step follows the update rule") {
    ad::ParamStore<float> store;
    store.add("w", Tensor<float>({3}, std::vector<float>{1.0f, -2.0f, 0.5f}));
    store.get("w").grad = Tensor<float>({3}, std::vector<float>{0.1f, -0.4f, 0.0f});
    AdamW opt(store, {0.01, 0.9, 0.999, 1e-8, 0.1});
    opt.step(store);
    const auto& w = store.get("w").value;
    const double init[3] = {1.0, -2.0, 0.5}, g[3] = {0.1, -0.4, 0.0};
    for (int i = 0; i < 3; ++i) {
        // Bias-corrected moments on step 1 are g and g^2.
        const double expect = init[i] * (1 - 0.01 * 0.1) - 0.01 * g[i] / (std::abs(g[i]) + 1e-8);
        CHECK(w[i] == doctest::Approx(expect).epsilon(1e-6));
    }
    CHECK(opt.steps() == 1);
}

TEST_CASE("ablation axes parse and expand") {
    CHECK(parse_axes("").empty());
    CHECK(parse_axes("  ").empty());
    CHECK(expand_axes({}, AblateMode::Single).size() == 1);
    const auto depth = parse_axes("depth:2,3,4,6,8");
    REQUIRE(depth.size() == 1);
    CHECK(expand_axes(depth, AblateMode::Single).size() == 5);
    CHECK(expand_axes(parse_axes("objective:smooth_l1,l1,l2,cosine"), AblateMode::Single).size() == 4);
    const auto two = parse_axes("depth:2,4; lambda:0,0.5,1");
    CHECK(expand_axes(two, AblateMode::Single).size() == 5);
    const auto grid = expand_axes(two, AblateMode::Grid);
    REQUIRE(grid.size() == 6);
    CHECK(grid[1].value == "depth=2;lambda=0.5");
    CHECK(grid[5].settings == std::vector<std::pair<std::string, std::string>>{{"depth", "4"}, {"lambda", "1"}});
    CHECK_THROWS_AS(parse_axes("width:1,2"), Error);
    CHECK_THROWS_AS(parse_axes("depth:"), Error);
    CHECK_THROWS_AS(parse_axes("depth:1;depth:2"), Error);
    CHECK_THROWS_AS(parse_ablate_mode("random"), Error);

    TrainConfig c = small_config();
    apply_axis(c, "range", "0.25-0.75");
    CHECK(c.align.t_lo == 0.25);
    CHECK(c.align.t_hi == 0.75);
    apply_axis(c, "mlp", "3");
    CHECK(c.proj_layers == 3);
    apply_axis(c, "objective", "cosine");
    CHECK(c.align.objective == alignment::Objective::Cosine);
    CHECK_THROWS_AS(apply_axis(c, "lambda", "x"), Error);
    CHECK_THROWS_AS(apply_axis(c, "range", "0.5"), Error);
}

TEST_CASE("ablation runs record failures and keep going") {
    auto cfg = small_config();
    cfg.iters = 2;
    const auto train = synthetic_cache(cfg.backbone, 16, 8);
    const auto ref = synthetic_cache(cfg.backbone, 300, 9);
    AblationOptions opt;
    opt.sample.steps = 2;
    opt.sample.count = 300;
    std::size_t seen = 0;
    opt.on_row = [&](const AblationRow&) { ++seen; };
    // Depth 5 exceeds the two-block backbone.
    const auto rows = ablate(cfg, parse_axes("depth:1,5,2"), AblateMode::Single, train, ref, opt);
    REQUIRE(rows.size() == 3);
    CHECK(seen == 3);
    CHECK(rows[0].ok);
    CHECK_FALSE(rows[1].ok);
    CHECK_FALSE(rows[1].message.empty());
    CHECK(rows[2].ok);
    CHECK(rows[0].toy_fid > 0);
    CHECK(rows[0].cfg.seed != rows[2].cfg.seed);
    const auto dir = test::scratch_dir("ablate_csv");
    write_ablation_csv(dir / "r.csv", rows);
    std::ifstream in(dir / "r.csv");
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) ++n;
    CHECK(n == 4);
}
