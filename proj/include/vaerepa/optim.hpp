// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vaerepa/ad/graph.hpp"
#include "vaerepa/checkpoint.hpp"

namespace vaerepa {

/// Adam with decoupled weight decay over every parameter of one store.
class AdamW {
public:
    struct Hyper {
        double lr = 1e-4;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 0.0;
    };

    AdamW(const ad::ParamStore<float>& store, Hyper hp);

    /// Applies one update from the gradients currently held in `store`.
    void step(ad::ParamStore<float>& store);

    std::uint64_t steps() const { return t_; }
    const Hyper& hyper() const { return hp_; }

    void save(Checkpoint& ck, const std::string& prefix) const;
    void load(const Checkpoint& ck, const std::string& prefix, std::uint64_t steps);

private:
    Hyper hp_;
    std::uint64_t t_ = 0;
    std::vector<Tensor<float>> m_, v_;
};

/// ema <- decay * ema + (1 - decay) * param for matching stores.
void ema_update(ad::ParamStore<float>& ema, const ad::ParamStore<float>& params, float decay);

/// Deterministic minibatch schedule: position g = step * batch + j of the
/// sample stream maps to permutation (g / n) at offset g % n. Any step can
/// be reconstructed from (seed, step) alone.
class EpochSampler {
public:
    EpochSampler(std::size_t n, std::size_t batch, std::uint64_t seed);
    std::vector<std::size_t> batch(std::uint64_t step);

private:
    const std::vector<std::size_t>& permutation(std::uint64_t epoch);

    std::size_t n_, batch_;
    std::uint64_t seed_;
    std::uint64_t cached_epoch_ = ~std::uint64_t{0};
    std::vector<std::size_t> perm_;
};

namespace init {

/// U(-sqrt(6 / (fan_in + fan_out)), +sqrt(6 / (fan_in + fan_out))).
template <typename T>
void xavier_uniform(Tensor<T>& t, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed);
/// U(-1/sqrt(fan_in), +1/sqrt(fan_in)).
template <typename T>
void fan_in_uniform(Tensor<T>& t, std::size_t fan_in, std::uint64_t seed);
template <typename T>
void normal(Tensor<T>& t, double stddev, std::uint64_t seed);

}  // namespace init

}  // namespace vaerepa
