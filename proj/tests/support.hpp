// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

// Helpers shared by the test binaries. Nothing here calls into the library
// code under test except for the RNG used to build inputs.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vaerepa/rng.hpp"
#include "vaerepa/tensor.hpp"

namespace vaerepa::test {

template <typename T>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
    Tensor<T> t(std::move(shape));
    Philox rng(seed, 0x7E57);
    for (auto& v : t.vec()) v = T(scale * rng.normal());
    return t;
}

inline double rel_err(double a, double b, double floor = 1e-12) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("vaerepa_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace vaerepa::test
