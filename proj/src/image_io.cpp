// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

#include "vaerepa/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

#include "vaerepa/error.hpp"

namespace vaerepa {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

RgbImage read_png(const std::filesystem::path& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    require(f != nullptr, ErrorKind::Io, "cannot open image {}", path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorKind::Io, "{}: libpng initialisation failed", path.string());
    }
    RgbImage img;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorKind::Io, "{}: unreadable PNG", path.string());
    }
    png_init_io(png, f.get());
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    img.width = png_get_image_width(png, info);
    img.height = png_get_image_height(png, info);
    img.rgb.resize(img.width * img.height * 3);
    rows.resize(img.height);
    for (std::size_t y = 0; y < img.height; ++y) rows[y] = img.rgb.data() + y * img.width * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

std::string next_token(std::istream& is) {
    std::string tok;
    char c;
    while (is.get(c)) {
        if (c == '#') {
            std::string skip;
            std::getline(is, skip);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(c);
    }
    return tok;
}

RgbImage read_pnm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    require(static_cast<bool>(is), ErrorKind::Io, "cannot open image {}", path.string());
    const std::string magic = next_token(is);
    require(magic == "P6" || magic == "P5", ErrorKind::Io, "{}: unsupported PNM variant `{}`", path.string(), magic);
    RgbImage img;
    std::size_t maxval = 0;
    try {
        img.width = std::stoul(next_token(is));
        img.height = std::stoul(next_token(is));
        maxval = std::stoul(next_token(is));
    } catch (const std::exception&) {
        fail(ErrorKind::Io, "{}: malformed PNM header", path.string());
    }
    require(maxval > 0 && maxval < 256, ErrorKind::Io, "{}: only 8-bit PNM is supported", path.string());
    const std::size_t channels = magic == "P6" ? 3 : 1;
    std::vector<std::uint8_t> raw(img.width * img.height * channels);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    require(static_cast<bool>(is), ErrorKind::Io, "{}: truncated PNM", path.string());
    img.rgb.resize(img.width * img.height * 3);
    for (std::size_t i = 0; i < img.width * img.height; ++i)
        for (std::size_t c = 0; c < 3; ++c) {
            const std::size_t v = raw[i * channels + (channels == 3 ? c : 0)];
            img.rgb[i * 3 + c] = static_cast<std::uint8_t>((v * 255 + maxval / 2) / maxval);
        }
    return img;
}

}  // namespace

RgbImage read_image(const std::filesystem::path& path) {
    std::ifstream probe(path, std::ios::binary);
    require(static_cast<bool>(probe), ErrorKind::Io, "cannot open image {}", path.string());
    unsigned char sig[8] = {};
    probe.read(reinterpret_cast<char*>(sig), 8);
    if (probe.gcount() == 8 && png_sig_cmp(sig, 0, 8) == 0) return read_png(path);
    if (probe.gcount() >= 2 && sig[0] == 'P' && (sig[1] == '6' || sig[1] == '5')) return read_pnm(path);
    fail(ErrorKind::Io, "{}: unrecognised image format (PNG or binary PPM/PGM expected)", path.string());
}

void write_png(const std::filesystem::path& path, const RgbImage& img) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    FilePtr f(std::fopen(path.c_str(), "wb"));
    require(f != nullptr, ErrorKind::Io, "cannot write {}", path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorKind::Io, "{}: libpng initialisation failed", path.string());
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorKind::Io, "{}: PNG encoding failed", path.string());
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t y = 0; y < img.height; ++y)
        png_write_row(png, const_cast<png_bytep>(img.rgb.data() + y * img.width * 3));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    require(static_cast<bool>(os), ErrorKind::Io, "cannot write {}", path.string());
    os << "P6\n" << img.width << " " << img.height << "\n255\n";
    os.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
}

RgbImage tile(const std::vector<RgbImage>& images, std::size_t cols, std::size_t gap) {
    require(!images.empty() && cols > 0, ErrorKind::Shape, "tile: nothing to tile");
    const std::size_t w = images[0].width, h = images[0].height;
    const std::size_t rows = (images.size() + cols - 1) / cols;
    RgbImage out;
    out.width = cols * w + (cols - 1) * gap;
    out.height = rows * h + (rows - 1) * gap;
    out.rgb.assign(out.width * out.height * 3, 255);
    for (std::size_t i = 0; i < images.size(); ++i) {
        require(images[i].width == w && images[i].height == h, ErrorKind::Shape, "tile: images differ in size");
        const std::size_t ox = (i % cols) * (w + gap), oy = (i / cols) * (h + gap);
        for (std::size_t y = 0; y < h; ++y)
            std::copy(images[i].at(0, y), images[i].at(0, y) + 3 * w, out.at(ox, oy + y));
    }
    return out;
}

RgbImage upscale(const RgbImage& img, std::size_t factor) {
    RgbImage out;
    out.width = img.width * factor;
    out.height = img.height * factor;
    out.rgb.resize(out.width * out.height * 3);
    for (std::size_t y = 0; y < out.height; ++y)
        for (std::size_t x = 0; x < out.width; ++x) std::copy_n(img.at(x / factor, y / factor), 3, out.at(x, y));
    return out;
}

}  // namespace vaerepa
