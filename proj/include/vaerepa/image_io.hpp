// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace vaerepa {

/// 8-bit interleaved RGB raster.
struct RgbImage {
    std::size_t width = 0, height = 0;
    std::vector<std::uint8_t> rgb;

    std::uint8_t* at(std::size_t x, std::size_t y) { return rgb.data() + 3 * (y * width + x); }
    const std::uint8_t* at(std::size_t x, std::size_t y) const { return rgb.data() + 3 * (y * width + x); }
};

/// Reads PNG (any bit depth / colour type, converted to 8-bit RGB) or
/// binary PPM/PGM (P6/P5). Throws ErrorKind::Io naming the path.
RgbImage read_image(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const RgbImage& img);
void write_ppm(const std::filesystem::path& path, const RgbImage& img);

/// Tiles equally sized images into a grid with `cols` columns.
RgbImage tile(const std::vector<RgbImage>& images, std::size_t cols, std::size_t gap = 1);

/// Nearest-neighbour integer upscaling.
RgbImage upscale(const RgbImage& img, std::size_t factor);

}  // namespace vaerepa
