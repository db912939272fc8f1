// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

#include "vaerepa/optim.hpp"

#include <cmath>
#include <numeric>

#include "vaerepa/kernels/kernels.hpp"
#include "vaerepa/rng.hpp"

namespace vaerepa {

AdamW::AdamW(const ad::ParamStore<float>& store, Hyper hp) : hp_(hp) {
    for (const auto& p : store.all()) {
        m_.emplace_back(p.value.shape());
        v_.emplace_back(p.value.shape());
    }
}

void AdamW::step(ad::ParamStore<float>& store) {
    require(store.all().size() == m_.size(), ErrorKind::Shape, "optimizer built for a different parameter set");
    ++t_;
    const kernels::AdamWParams k{
        static_cast<float>(hp_.lr),
        static_cast<float>(hp_.beta1),
        static_cast<float>(hp_.beta2),
        static_cast<float>(hp_.eps),
        static_cast<float>(hp_.weight_decay),
        static_cast<float>(1.0 - std::pow(hp_.beta1, double(t_))),
        static_cast<float>(1.0 - std::pow(hp_.beta2, double(t_))),
    };
    const auto& kt = kernels::active();
    std::size_t i = 0;
    for (auto& p : store.all()) {
        kt.adamw(k, p.value.data(), p.grad.data(), m_[i].data(), v_[i].data(), p.value.size());
        ++i;
    }
}

void AdamW::save(Checkpoint& ck, const std::string& prefix) const {
    for (std::size_t i = 0; i < m_.size(); ++i) {
        ck.add(prefix + "m." + std::to_string(i), m_[i]);
        ck.add(prefix + "v." + std::to_string(i), v_[i]);
    }
}

void AdamW::load(const Checkpoint& ck, const std::string& prefix, std::uint64_t steps) {
    for (std::size_t i = 0; i < m_.size(); ++i) {
        const auto& m = ck.get(prefix + "m." + std::to_string(i));
        const auto& v = ck.get(prefix + "v." + std::to_string(i));
        require(m.shape() == m_[i].shape() && v.shape() == v_[i].shape(), ErrorKind::Shape,
                "optimizer state {} has a mismatched shape", i);
        m_[i] = m;
        v_[i] = v;
    }
    t_ = steps;
}

void ema_update(ad::ParamStore<float>& ema, const ad::ParamStore<float>& params, float decay) {
    require(ema.all().size() == params.all().size(), ErrorKind::Shape, "EMA store does not match parameters");
    const auto& kt = kernels::active();
    for (std::size_t i = 0; i < params.all().size(); ++i) {
        auto& e = ema.all()[i].value;
        const auto& p = params.all()[i].value;
        kt.ema(decay, e.data(), p.data(), p.size());
    }
}

EpochSampler::EpochSampler(std::size_t n, std::size_t batch, std::uint64_t seed) : n_(n), batch_(batch), seed_(seed) {
    require(n > 0 && batch > 0, ErrorKind::Config, "empty dataset or zero batch size");
}

const std::vector<std::size_t>& EpochSampler::permutation(std::uint64_t epoch) {
    if (epoch != cached_epoch_) {
        perm_.resize(n_);
        std::iota(perm_.begin(), perm_.end(), std::size_t{0});
        Philox rng(derive_seed(seed_, 0x5045524D /* PERM */), epoch);
        for (std::size_t i = n_; i > 1; --i) std::swap(perm_[i - 1], perm_[rng.below(i)]);
        cached_epoch_ = epoch;
    }
    return perm_;
}

std::vector<std::size_t> EpochSampler::batch(std::uint64_t step) {
    std::vector<std::size_t> out(batch_);
    for (std::size_t j = 0; j < batch_; ++j) {
        const std::uint64_t g = step * batch_ + j;
        out[j] = permutation(g / n_)[g % n_];
    }
    return out;
}

namespace init {

template <typename T>
void xavier_uniform(Tensor<T>& t, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
    const double bound = std::sqrt(6.0 / double(fan_in + fan_out));
    Philox rng(seed);
    for (auto& v : t.span()) v = T(rng.uniform(-bound, bound));
}

template <typename T>
void fan_in_uniform(Tensor<T>& t, std::size_t fan_in, std::uint64_t seed) {
    const double bound = 1.0 / std::sqrt(double(fan_in));
    Philox rng(seed);
    for (auto& v : t.span()) v = T(rng.uniform(-bound, bound));
}

template <typename T>
void normal(Tensor<T>& t, double stddev, std::uint64_t seed) {
    Philox rng(seed);
    for (auto& v : t.span()) v = T(stddev * rng.normal());
}

template void xavier_uniform<float>(Tensor<float>&, std::size_t, std::size_t, std::uint64_t);
template void xavier_uniform<double>(Tensor<double>&, std::size_t, std::size_t, std::uint64_t);
template void fan_in_uniform<float>(Tensor<float>&, std::size_t, std::uint64_t);
template void fan_in_uniform<double>(Tensor<double>&, std::size_t, std::uint64_t);
template void normal<float>(Tensor<float>&, double, std::uint64_t);
template void normal<double>(Tensor<double>&, double, std::uint64_t);

}  // namespace init
}  // namespace vaerepa
