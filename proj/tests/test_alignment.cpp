// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "support.hpp"
#include "vaerepa/ad/ops.hpp"
#include "vaerepa/alignment.hpp"
#include "vaerepa/backbone.hpp"

using namespace vaerepa;
using namespace vaerepa::alignment;

namespace {

constexpr Objective kAll[] = {Objective::SmoothL1, Objective::L1, Objective::L2, Objective::Cosine};

// The piecewise definition, written out independently of the library.
double huber_oracle(double d, double beta) {
    if (std::fabs(d) <= beta) return d * d / (2.0 * beta);
    return std::fabs(d) - beta / 2.0;
}

AlignmentConfig with(Objective o) {
    AlignmentConfig c;
    c.objective = o;
    return c;
}

// Per-sample loss of token rows [tokens, m], by definition.
double sample_oracle(Objective o, double beta, const double* a, const double* b, std::size_t tokens, std::size_t m) {
    double acc = 0;
    if (o == Objective::Cosine) {
        for (std::size_t r = 0; r < tokens; ++r) {
            double dot = 0, na = 0, nb = 0;
            for (std::size_t j = 0; j < m; ++j) {
                dot += a[r * m + j] * b[r * m + j];
                na += a[r * m + j] * a[r * m + j];
                nb += b[r * m + j] * b[r * m + j];
            }
            acc += 1.0 - dot / std::max(std::sqrt(na * nb), kCosineEps);
        }
        return acc / double(tokens);
    }
    for (std::size_t i = 0; i < tokens * m; ++i) {
        const double d = a[i] - b[i];
        acc += o == Objective::SmoothL1 ? huber_oracle(d, beta) : o == Objective::L1 ? std::fabs(d) : d * d;
    }
    return acc / double(tokens * m);
}

}  // namespace

TEST_CASE("smooth-l1 worked values") {
    CHECK(smooth_l1(0.02, 0.05) == doctest::Approx(0.004).epsilon(1e-14));
    CHECK(smooth_l1(0.1, 0.05) == doctest::Approx(0.075).epsilon(1e-14));
    CHECK(smooth_l1(-0.1, 0.05) == doctest::Approx(0.075).epsilon(1e-14));
    // Both branches meet at beta / 2.
    CHECK(0.05 * 0.05 / (2 * 0.05) == doctest::Approx(0.025).epsilon(1e-15));
    CHECK(smooth_l1(0.05, 0.05) == doctest::Approx(0.025).epsilon(1e-15));
    CHECK(smooth_l1(std::nextafter(0.05, 1.0), 0.05) == doctest::Approx(0.025).epsilon(1e-12));
    // Far from the kink the loss is exactly |d| - beta / 2.
    CHECK(smooth_l1(7.5, 0.05) == 7.5 - 0.025);
}

TEST_CASE("smooth-l1 equals the piecewise definition on random inputs") {
    Philox rng(31);
    for (int i = 0; i < 10000; ++i) {
        const double beta = rng.uniform(0.001, 1.0), d = rng.uniform(-3.0, 3.0) * (rng.uniform() < 0.5 ? beta : 1.0);
        REQUIRE(smooth_l1(d, beta) == huber_oracle(d, beta));
    }
}

TEST_CASE("smooth-l1 gradient matches central differences away from the kink") {
    Philox rng(32);
    for (int i = 0; i < 2000; ++i) {
        const double beta = 0.05, d = rng.uniform(-0.3, 0.3);
        if (std::fabs(std::fabs(d) - beta) < 1e-4) continue;
        const double h = 1e-6;
        const double fd = (smooth_l1(d + h, beta) - smooth_l1(d - h, beta)) / (2 * h);
        REQUIRE(std::fabs(fd - smooth_l1_grad(d, beta)) <= 1e-6);
    }
}

TEST_CASE("identical inputs give zero loss for every objective") {
    const auto f = test::random_tensor<double>({4, 8, 8}, 1);
    for (Objective o : kAll) CHECK(align_loss(with(o), f, f, 2) == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
}

TEST_CASE("cosine of antipodal inputs is 2") {
    const auto f = test::random_tensor<double>({4, 8, 8}, 2);
    Tensor<double> neg(f.shape());
    for (std::size_t i = 0; i < f.size(); ++i) neg[i] = -f[i];
    CHECK(align_loss(with(Objective::Cosine), neg, f, 2) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("objectives match their definitions") {
    const auto a = test::random_tensor<double>({4, 8, 8}, 3, 0.1), b = test::random_tensor<double>({4, 8, 8}, 4, 0.1);
    const auto ta = backbone::patchify<double>(a.span(), 1, 4, 8, 8, 2), tb = backbone::patchify<double>(b.span(), 1, 4, 8, 8, 2);
    for (Objective o : kAll) {
        INFO(objective_name(o));
        CHECK(align_loss(with(o), a, b, 2) ==
              doctest::Approx(sample_oracle(o, 0.05, ta.data(), tb.data(), 16, 16)).epsilon(1e-12));
    }
}

TEST_CASE("elementwise objectives are invariant to a shared permutation") {
    auto a = test::random_tensor<double>({2, 4, 4}, 5), b = test::random_tensor<double>({2, 4, 4}, 6);
    std::vector<std::size_t> perm(a.size());
    std::iota(perm.begin(), perm.end(), 0);
    Philox rng(7);
    for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    Tensor<double> pa(a.shape()), pb(b.shape());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        pa[i] = a[perm[i]];
        pb[i] = b[perm[i]];
    }
    for (Objective o : {Objective::SmoothL1, Objective::L1, Objective::L2})
        CHECK(align_loss(with(o), a, b, 2) == doctest::Approx(align_loss(with(o), pa, pb, 2)).epsilon(1e-14));
}

TEST_CASE("align_loss input validation") {
    const auto a = test::random_tensor<double>({4, 8, 8}, 1);
    CHECK_THROWS_AS(align_loss(with(Objective::L2), a, test::random_tensor<double>({4, 8, 4}, 1), 2), Error);
    auto bad = a;
    bad[3] = std::nan("");
    try {
        align_loss(with(Objective::L2), bad, a, 2);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Numeric);
    }
    AlignmentConfig c;
    c.beta = 0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.lambda = -1;
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.t_lo = 0.6;
    c.t_hi = 0.5;
    CHECK_THROWS_AS(c.validate(), Error);
    CHECK(parse_objective("cosine") == Objective::Cosine);
    CHECK_THROWS_AS(parse_objective("huber"), Error);
}

TEST_CASE("projector shapes, zero input and parameter counts") {
    ProjectorConfig pc;
    pc.in_dim = 256;
    pc.hidden = 256;
    pc.out_dim = 16;
    const Projector<float> proj(pc);
    const auto out = project(proj, Tensor<float>({16, 256}), 4, 8, 8, 2);
    CHECK(out.shape() == Shape{4, 8, 8});
    for (float v : out.vec()) CHECK(v == 0.0f);
    CHECK(proj.params().scalar_count() == pc.param_count());
    ProjectorConfig two = pc;
    two.layers = 2;
    CHECK(two.param_count() < pc.param_count());
    CHECK(Projector<float>(two).params().scalar_count() == two.param_count());
    CHECK_THROWS_AS(project(proj, Tensor<float>({15, 256}), 4, 8, 8, 2), Error);
    ProjectorConfig one = pc;
    one.layers = 1;
    CHECK_THROWS_AS(one.validate(), Error);
}

TEST_CASE("projector has no nonlinearity after the last layer") {
    ProjectorConfig pc{4, 6, 2, 3, 1};
    Projector<double> proj(pc);
    // silu is bounded below by about -0.2785; outputs under that bound
    // rule out an activation on the last layer.
    const auto h = test::random_tensor<double>({50, 4}, 2, 3.0);
    const auto y = proj.forward(h);
    CHECK(*std::min_element(y.vec().begin(), y.vec().end()) < -0.3);
}

TEST_CASE("batched graph loss: values, masking and gradients") {
    const std::size_t batch = 3, tokens = 4, m = 5;
    const auto target = test::random_tensor<double>({batch * tokens, m}, 8, 0.1);
    const auto pred0 = test::random_tensor<double>({batch * tokens, m}, 9, 0.1);
    const std::vector<double> mask{1, 0, 1};
    for (Objective o : kAll) {
        INFO(objective_name(o));
        AlignmentConfig cfg = with(o);
        auto loss_at = [&](const Tensor<double>& p) {
            ad::Graph<double> g(false);
            return g.scalar(align_loss_graph(g, cfg, g.constant(p), target, tokens, std::span<const double>(mask)));
        };
        double expect = 0;
        for (std::size_t b = 0; b < batch; ++b)
            if (mask[b] != 0)
                expect += sample_oracle(o, cfg.beta, pred0.data() + b * tokens * m, target.data() + b * tokens * m, tokens, m);
        CHECK(loss_at(pred0) == doctest::Approx(expect / 2.0).epsilon(1e-12));

        ad::ParamStore<double> store;
        store.add("p", pred0);
        ad::Graph<double> g;
        ad::Binder<double> bind(g, store);
        g.backward(align_loss_graph(g, cfg, bind("p"), target, tokens, std::span<const double>(mask)));
        const auto& grad = store.get("p").grad;
        for (std::size_t i = 0; i < pred0.size(); ++i) {
            auto plus = pred0, minus = pred0;
            const double h = 1e-6;
            plus[i] += h;
            minus[i] -= h;
            const double fd = (loss_at(plus) - loss_at(minus)) / (2 * h);
            REQUIRE(std::fabs(fd - grad[i]) <= 1e-6 * std::max(1.0, std::fabs(fd)));
            if (i / (tokens * m) == 1) REQUIRE(grad[i] == 0.0);
        }
    }
    // An all-zero mask gives an exact zero.
    ad::Graph<double> g(false);
    const std::vector<double> none(batch, 0.0);
    CHECK(g.scalar(align_loss_graph(g, with(Objective::L2), g.constant(pred0), target, tokens,
                                    std::span<const double>(none))) == 0.0);
}
