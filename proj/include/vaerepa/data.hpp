// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

// Synthetic shapes corpus and a directory-of-images loader.
//
// On-disk layout of a dataset directory:
//   meta        text, `key = value`: count, size, classes, seed
//   pixels.f32  count * 3 * size * size little-endian float32, sample-major,
//               channel-major (CHW) within a sample
//   labels.u16  count little-endian uint16
// Sample ids are the zero-based positions in the files.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "vaerepa/image_io.hpp"
#include "vaerepa/tensor.hpp"

namespace vaerepa::data {

struct ImageSample {
    Tensor<float> pixels;  // [3, S, S], values in [-1, 1]
    std::uint16_t label = 0;
    std::uint64_t id = 0;
};

struct DatasetSpec {
    std::size_t count = 10000;
    std::size_t size = 32;
    std::size_t classes = 8;
    std::uint64_t seed = 0;

    /// count >= classes, classes <= kMaxClasses, size divisible by `downsample`.
    void validate(std::size_t downsample = 4) const;
};

inline constexpr std::size_t kMaxClasses = 64;

struct Dataset {
    std::size_t size = 0;
    std::size_t classes = 0;
    std::uint64_t seed = 0;
    std::vector<ImageSample> samples;
};

/// Class c is the (shape c % 8, hue (c + c / 8) % 8) family, rendered at a
/// random position, scale and rotation over a random dark background.
/// Labels cycle 0..K-1 by id, so class counts differ by at most one.
Dataset generate_shapes(const DatasetSpec& spec);

/// Renders the single sample with the given id (what generate_shapes emits
/// at that position).
ImageSample render_shape_sample(const DatasetSpec& spec, std::uint64_t id);

/// Class sub-folders in lexicographic order become labels 0, 1, ...; files
/// inside each folder are read in lexicographic order, centre-cropped to a
/// square, resized to size x size and mapped to [-1, 1].
Dataset load_image_dir(const std::filesystem::path& root, std::size_t size);

/// Centre crop + bilinear resize + [-1, 1] mapping of a single raster.
Tensor<float> image_to_tensor(const RgbImage& img, std::size_t size);

/// Inverse mapping of one [3, S, S] array in [-1, 1] to 8-bit RGB.
RgbImage tensor_to_image(std::span<const float> chw, std::size_t size);

void save_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace vaerepa::data
