// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "support.hpp"
#include "vaerepa/kv_config.hpp"
#include "vaerepa/vae.hpp"

namespace fs = std::filesystem;
using namespace vaerepa;

namespace {

// Small enough for seconds per stage; 300 held-out and sampled latents
// exceed the 256 feature dimensions the distance needs.
constexpr const char* kTiny =
    "count = 64\n"
    "eval_count = 300\n"
    "classes = 4\n"
    "vae_widths = 8,16\n"
    "vae_steps = 5\n"
    "vae_batch = 8\n"
    "depth = 2\n"
    "width = 32\n"
    "heads = 2\n"
    "time_freq_dim = 16\n"
    "align_depth = 1\n"
    "batch = 8\n"
    "iters = 6\n"
    "lr = 1e-3\n"
    "log_every = 2\n"
    "ckpt_every = 0\n"
    "steps = 4\n"
    "sample_count = 300\n"
    "grid_count = 8\n"
    "viz_depths = 1,2\n"
    "viz_count = 2\n";

int run(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(VAEREPA_CLI_PATH) + " " + args + " >" + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

struct Pipeline {
    fs::path root, out, config;
};

// The shared prefix of every scenario: data, VAE and features.
const Pipeline& pipeline() {
    static const Pipeline p = [] {
        Pipeline q;
        q.root = test::scratch_dir("cli");
        q.out = q.root / "out";
        q.config = q.root / "tiny.cfg";
        std::ofstream(q.config) << kTiny;
        const std::string common = "--config " + q.config.string() + " --out " + q.out.string();
        for (const char* sub : {"gen-data", "train-vae", "extract-features"}) {
            const int rc = run(std::string(sub) + " " + common, q.root / (std::string(sub) + ".log"));
            if (rc != 0) FAIL(sub, " exited with ", rc, ": ", slurp(q.root / (std::string(sub) + ".log")));
        }
        return q;
    }();
    return p;
}

std::string common_args(const fs::path& out) {
    return "--config " + pipeline().config.string() + " --out " + out.string();
}

}  // namespace

TEST_CASE("end-to-end pipeline on a tiny configuration") {
    const auto& p = pipeline();
    const auto& out = p.out;
    CHECK(fs::exists(out / "data" / "train"));
    CHECK(fs::exists(out / "vae" / "vae.vrck"));
    CHECK(fs::exists(out / "vae" / "reconstructions.png"));
    const auto feats = vae::FeatureCache::read(out / "features" / "train.vrfc");
    CHECK(feats.count() == 64);
    CHECK(vae::FeatureCache::read(out / "features" / "eval.vrfc").count() == 300);

    for (const char* sub : {"train", "sample", "eval", "viz-pca", "flops"}) {
        INFO(sub);
        const fs::path log = p.root / (std::string(sub) + ".log");
        REQUIRE_MESSAGE(run(std::string(sub) + " " + common_args(out), log) == 0, slurp(log));
        CHECK(fs::exists(out / (std::string(sub) == "viz-pca" ? "viz" : sub) / "run.meta"));
    }
    CHECK(lines(out / "train" / "loss.csv").size() == 7);
    CHECK(fs::exists(out / "train" / "final.vrck"));
    CHECK(vae::FeatureCache::read(out / "sample" / "samples.vrfc").count() == 300);
    CHECK(fs::exists(out / "sample" / "grid.png"));
    const auto metrics = KvConfig::load(out / "eval" / "metrics.txt");
    CHECK(metrics.real("toy_fid") >= 0.0);
    CHECK(metrics.integer("external_params") == 0);
    CHECK(fs::exists(out / "viz" / "hidden_pca.png"));
    CHECK(KvConfig::load(out / "flops" / "report.txt").integer("projector_flops") > 0);
}

TEST_CASE("lambda = 0 is recorded and removes the alignment term") {
    const auto out = test::scratch_dir("cli_lambda");
    const auto& p = pipeline();
    const std::string args = "train " + common_args(out) + " --set lambda=0 --set features=" +
                             (p.out / "features" / "train.vrfc").string();
    REQUIRE(run(args, out / "train.log") == 0);
    CHECK(KvConfig::load(out / "train" / "run.meta").real("lambda") == 0.0);
    const auto rows = lines(out / "train" / "loss.csv");
    REQUIRE(rows.size() == 7);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        std::stringstream ss(rows[i]);
        std::string step, phi, align, total;
        std::getline(ss, step, ',');
        std::getline(ss, phi, ',');
        std::getline(ss, align, ',');
        std::getline(ss, total, ',');
        CHECK(total == phi);
    }
}

TEST_CASE("ablation over five tap depths writes five rows") {
    const auto out = test::scratch_dir("cli_ablate");
    const auto& p = pipeline();
    const std::string args = "ablate " + common_args(out) + " --set depth=8 --set axes=depth:2,3,4,6,8" +
                             " --set ablate_iters=2 --set ablate_steps=2 --set ablate_sample_count=300" +
                             " --set features=" + (p.out / "features" / "train.vrfc").string() +
                             " --set reference=" + (p.out / "features" / "eval.vrfc").string();
    REQUIRE_MESSAGE(run(args, out / "ablate.log") == 0, slurp(out / "ablate.log"));
    const auto rows = lines(out / "ablate" / "results.csv");
    REQUIRE(rows.size() == 6);
    CHECK(rows[0].rfind("run,axis,value,", 0) == 0);
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].find(",ok,") != std::string::npos);
}

TEST_CASE("exit codes") {
    const auto out = test::scratch_dir("cli_codes");
    CHECK(run("train --out " + out.string() + " --set no_such_key=1", out / "a.log") == 2);
    CHECK(slurp(out / "a.log").find("no_such_key") != std::string::npos);
    CHECK(run("train --out " + out.string() + " --set iters=abc", out / "b.log") == 2);
    CHECK(run("train --out " + out.string(), out / "c.log") == 3);
    CHECK(slurp(out / "c.log").find("extract-features") != std::string::npos);
    CHECK(run("sample --out " + out.string(), out / "d.log") == 3);
    CHECK(run("not-a-command", out / "e.log") == 2);
    CHECK(run("flops --list-keys", out / "f.log") == 0);
    CHECK(slurp(out / "f.log").find("align_depth") != std::string::npos);
}

TEST_CASE("run.meta replays to the same result") {
    const auto& p = pipeline();
    const auto a = test::scratch_dir("cli_replay_a"), b = test::scratch_dir("cli_replay_b");
    const std::string feats = " --set features=" + (p.out / "features" / "train.vrfc").string();
    REQUIRE(run("train " + common_args(a) + feats, a / "train.log") == 0);
    REQUIRE(run("train --config " + (a / "train" / "run.meta").string() + " --out " + b.string(), b / "train.log") == 0);
    CHECK(slurp(a / "train" / "loss.csv") == slurp(b / "train" / "loss.csv"));
}

TEST_CASE("config resolution order") {
    const auto dir = test::scratch_dir("cli_resolve");
    std::ofstream(dir / "c.cfg") << "lr = 0.5\nseed = 3\n";
    const auto cfg = cli::resolve_config(dir / "c.cfg", {"lr=0.25"}, 9);
    CHECK(cfg.real("lr") == 0.25);
    CHECK(cfg.u64("seed") == 9);
    CHECK(cfg.str("objective") == "smooth_l1");
    std::ofstream(dir / "bad.cfg") << "learning_rate = 1\n";
    CHECK_THROWS_AS(cli::resolve_config(dir / "bad.cfg", {}, std::nullopt), Error);
    CHECK(cli::exit_code(ErrorKind::MissingArtifact) == 3);
    CHECK(cli::exit_code(ErrorKind::Config) == 2);
}
