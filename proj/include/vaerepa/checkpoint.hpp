// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

// Weight checkpoint file, all integers little-endian:
//   "VRCK"                magic
//   u32 version           = 1
//   u64 step              training step the state belongs to (0 if n/a)
//   u32 meta_len, bytes   `key = value` text describing the producer config
//   u32 count             number of named tensors, then per tensor:
//     u16 name_len, bytes
//     u32 rank, u32 dims[rank]
//     f32 payload[prod(dims)]
// Tensors appear in insertion order; names use dotted prefixes
// ("backbone.", "projector.", "ema.", ...) so consumers can drop groups.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "vaerepa/ad/graph.hpp"
#include "vaerepa/kv_config.hpp"
#include "vaerepa/tensor.hpp"

namespace vaerepa {

struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    std::uint64_t step = 0;
    KvConfig meta;
    std::vector<std::pair<std::string, Tensor<float>>> tensors;

    void add(std::string name, Tensor<float> t) { tensors.emplace_back(std::move(name), std::move(t)); }
    const Tensor<float>& get(const std::string& name) const;
    bool has(const std::string& name) const;

    /// Appends every parameter of `store` under `prefix`.
    void add_params(const std::string& prefix, const ad::ParamStore<float>& store);
    /// Copies tensors named `prefix + param.name` into `store`; shapes must match.
    void load_params(const std::string& prefix, ad::ParamStore<float>& store) const;

    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace vaerepa
