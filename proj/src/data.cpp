// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

#include "vaerepa/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "vaerepa/binio.hpp"
#include "vaerepa/kv_config.hpp"
#include "vaerepa/rng.hpp"

namespace vaerepa::data {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kStreamTag = 0x44415441;  // "DATA"
constexpr std::size_t kShapeKinds = 8;

// Foreground colours in [-1, 1], one per hue index.
constexpr std::array<std::array<float, 3>, 8> kHues = {{
    {0.95f, -0.70f, -0.70f},   // red
    {0.95f, 0.20f, -0.85f},    // orange
    {0.90f, 0.90f, -0.60f},    // yellow
    {-0.60f, 0.85f, -0.60f},   // green
    {-0.70f, 0.85f, 0.90f},    // cyan
    {-0.60f, -0.40f, 0.95f},   // blue
    {0.30f, -0.70f, 0.90f},    // purple
    {0.95f, -0.50f, 0.60f},    // magenta
}};

// Membership in the canonical shape of the given kind, in unit coordinates.
bool inside(std::size_t kind, double u, double v) {
    const double au = std::abs(u), av = std::abs(v);
    switch (kind) {
        case 0: return u * u + v * v <= 1.0;
        case 1: return std::max(au, av) <= 0.8;
        case 2: return v >= -0.5 && v <= 1.0 - std::numbers::sqrt3 * au;
        case 3: {
            const double r2 = u * u + v * v;
            return r2 <= 1.0 && r2 >= 0.55 * 0.55;
        }
        case 4: return (au <= 0.3 && av <= 0.95) || (av <= 0.3 && au <= 0.95);
        case 5: return au + av <= 1.0;
        case 6: return u * u + (v / 0.4) * (v / 0.4) <= 1.0;
        case 7: {
            const double r = std::sqrt(u * u + v * v);
            return r <= 0.55 + 0.4 * std::cos(5.0 * std::atan2(v, u));
        }
        default: return false;
    }
}

}  // namespace

void DatasetSpec::validate(std::size_t downsample) const {
    require(classes >= 1 && classes <= kMaxClasses, ErrorKind::Config, "classes must be in [1, {}], got {}",
            kMaxClasses, classes);
    require(count >= classes, ErrorKind::Config, "count ({}) must be at least the class count ({})", count, classes);
    require(size > 0 && downsample > 0 && size % downsample == 0, ErrorKind::Config,
            "image size {} is not divisible by the downsampling factor {}", size, downsample);
}

ImageSample render_shape_sample(const DatasetSpec& spec, std::uint64_t id) {
    const std::size_t s = spec.size;
    const auto label = static_cast<std::uint16_t>(id % spec.classes);
    const std::size_t kind = label % kShapeKinds;
    const auto& colour = kHues[(label + label / kShapeKinds) % kHues.size()];

    Philox rng(derive_seed(spec.seed, kStreamTag), id);
    const double cx = rng.uniform(0.3, 0.7) * double(s);
    const double cy = rng.uniform(0.3, 0.7) * double(s);
    const double radius = rng.uniform(0.18, 0.32) * double(s);
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const float background = static_cast<float>(rng.uniform(-0.9, -0.5));
    const double ct = std::cos(theta), st = std::sin(theta);

    ImageSample out{Tensor<float>({3, s, s}), label, id};
    const std::size_t plane = s * s;
    for (std::size_t py = 0; py < s; ++py) {
        for (std::size_t px = 0; px < s; ++px) {
            // 2x2 supersampling for anti-aliased edges.
            int hits = 0;
            for (int sy = 0; sy < 2; ++sy)
                for (int sx = 0; sx < 2; ++sx) {
                    const double dx = (double(px) + 0.25 + 0.5 * sx - cx) / radius;
                    const double dy = (double(py) + 0.25 + 0.5 * sy - cy) / radius;
                    const double u = ct * dx + st * dy;
                    const double v = -st * dx + ct * dy;
                    hits += inside(kind, u, v) ? 1 : 0;
                }
            const float cover = static_cast<float>(hits) * 0.25f;
            for (std::size_t c = 0; c < 3; ++c)
                out.pixels[c * plane + py * s + px] = background + cover * (colour[c] - background);
        }
    }
    return out;
}

Dataset generate_shapes(const DatasetSpec& spec) {
    spec.validate(1);
    Dataset ds{spec.size, spec.classes, spec.seed, {}};
    ds.samples.reserve(spec.count);
    for (std::uint64_t id = 0; id < spec.count; ++id) ds.samples.push_back(render_shape_sample(spec, id));
    return ds;
}

Tensor<float> image_to_tensor(const RgbImage& img, std::size_t size) {
    require(img.width > 0 && img.height > 0, ErrorKind::Io, "empty image");
    const std::size_t side = std::min(img.width, img.height);
    const std::size_t x0 = (img.width - side) / 2, y0 = (img.height - side) / 2;
    Tensor<float> out({3, size, size});
    const double step = double(side) / double(size);
    const auto sample = [&](double x, double y, std::size_t c) {
        // Bilinear on the cropped square, pixel centres at integer + 0.5.
        x = std::clamp(x - 0.5, 0.0, double(side - 1));
        y = std::clamp(y - 0.5, 0.0, double(side - 1));
        const auto ix = static_cast<std::size_t>(x), iy = static_cast<std::size_t>(y);
        const std::size_t jx = std::min(ix + 1, side - 1), jy = std::min(iy + 1, side - 1);
        const double fx = x - double(ix), fy = y - double(iy);
        const auto px = [&](std::size_t a, std::size_t b) { return double(img.at(x0 + a, y0 + b)[c]); };
        return (1 - fy) * ((1 - fx) * px(ix, iy) + fx * px(jx, iy)) + fy * ((1 - fx) * px(ix, jy) + fx * px(jx, jy));
    };
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x) {
                const double v = sample((double(x) + 0.5) * step, (double(y) + 0.5) * step, c);
                out[(c * size + y) * size + x] = static_cast<float>(v / 127.5 - 1.0);
            }
    return out;
}

Dataset load_image_dir(const fs::path& root, std::size_t size) {
    require(fs::is_directory(root), ErrorKind::Io, "image directory {} does not exist", root.string());
    std::vector<fs::path> classes;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) classes.push_back(e.path());
    std::sort(classes.begin(), classes.end());
    require(classes.size() <= kMaxClasses, ErrorKind::Io, "{}: too many class folders", root.string());
    Dataset ds{size, classes.size(), 0, {}};
    for (std::size_t label = 0; label < classes.size(); ++label) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(classes[label]))
            if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            const std::uint64_t id = ds.samples.size();
            ds.samples.push_back({image_to_tensor(read_image(f), size), static_cast<std::uint16_t>(label), id});
        }
    }
    require(!ds.samples.empty(), ErrorKind::Io, "{}: no images found", root.string());
    return ds;
}

RgbImage tensor_to_image(std::span<const float> chw, std::size_t size) {
    require(chw.size() == 3 * size * size, ErrorKind::Shape, "{} values do not form a [3,{},{}] image", chw.size(),
            size, size);
    RgbImage img{size, size, std::vector<std::uint8_t>(3 * size * size)};
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t p = 0; p < size * size; ++p) {
            const double v = (std::clamp(chw[c * size * size + p], -1.0f, 1.0f) + 1.0) * 127.5;
            img.rgb[3 * p + c] = static_cast<std::uint8_t>(std::lround(v));
        }
    return img;
}

void save_dataset(const fs::path& dir, const Dataset& ds) {
    fs::create_directories(dir);
    KvConfig meta;
    meta.set("count", std::to_string(ds.samples.size()));
    meta.set("size", std::to_string(ds.size));
    meta.set("classes", std::to_string(ds.classes));
    meta.set("seed", std::to_string(ds.seed));
    meta.save(dir / "meta");
    auto px = binio::open_out(dir / "pixels.f32");
    auto lb = binio::open_out(dir / "labels.u16");
    for (const auto& s : ds.samples) {
        require(s.pixels.shape() == Shape{3, ds.size, ds.size}, ErrorKind::Shape, "sample {} has shape {}", s.id,
                shape_str(s.pixels.shape()));
        binio::put_f32s(px, s.pixels.span());
        binio::put<std::uint16_t>(lb, s.label);
    }
}

Dataset load_dataset(const fs::path& dir) {
    require(fs::exists(dir / "meta"), ErrorKind::MissingArtifact, "dataset {} not found (produce it with `gen-data`)",
            dir.string());
    const KvConfig meta = KvConfig::load(dir / "meta");
    Dataset ds{static_cast<std::size_t>(meta.integer("size")), static_cast<std::size_t>(meta.integer("classes")),
               meta.u64("seed"), {}};
    const auto count = static_cast<std::size_t>(meta.integer("count"));
    auto px = binio::open_in(dir / "pixels.f32");
    auto lb = binio::open_in(dir / "labels.u16");
    ds.samples.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        ImageSample s{Tensor<float>({3, ds.size, ds.size}), 0, i};
        binio::get_f32s(px, s.pixels.span(), dir / "pixels.f32");
        s.label = binio::get<std::uint16_t>(lb, dir / "labels.u16");
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

}  // namespace vaerepa::data
