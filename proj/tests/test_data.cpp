// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <array>
#include <cstring>
#include <fstream>

#include "support.hpp"
#include "vaerepa/data.hpp"
#include "vaerepa/image_io.hpp"

using namespace vaerepa;
using namespace vaerepa::data;

namespace {

RgbImage solid(std::size_t w, std::size_t h, std::uint8_t v) {
    RgbImage img{w, h, std::vector<std::uint8_t>(3 * w * h, v)};
    return img;
}

}  // namespace

TEST_CASE("one sample per class when count equals classes") {
    const auto ds = generate_shapes({8, 32, 8, 1});
    REQUIRE(ds.samples.size() == 8);
    std::array<int, 8> seen{};
    for (const auto& s : ds.samples) ++seen[s.label];
    for (int c : seen) CHECK(c == 1);
}

TEST_CASE("class counts are balanced") {
    const auto ds = generate_shapes({1000, 16, 8, 7});
    std::array<int, 8> counts{};
    for (const auto& s : ds.samples) ++counts[s.label];
    for (int c : counts) CHECK(c == 125);
    const auto odd = generate_shapes({103, 16, 5, 7});
    std::array<int, 5> oc{};
    for (const auto& s : odd.samples) ++oc[s.label];
    const auto [lo, hi] = std::minmax_element(oc.begin(), oc.end());
    CHECK(*hi - *lo <= 1);
}

TEST_CASE("generation is a pure function of the spec") {
    const DatasetSpec spec{64, 32, 8, 5};
    const auto a = generate_shapes(spec), b = generate_shapes(spec);
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        REQUIRE(std::memcmp(a.samples[i].pixels.data(), b.samples[i].pixels.data(), a.samples[i].pixels.size() * 4) == 0);
        CHECK(a.samples[i].pixels == render_shape_sample(spec, i).pixels);
    }
    const auto c = generate_shapes({64, 32, 8, 6});
    CHECK_FALSE(a.samples[3].pixels == c.samples[3].pixels);
}

TEST_CASE("pixels are finite and within [-1, 1]; ids are unique and ordered") {
    const auto ds = generate_shapes({200, 32, 8, 3});
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const auto& s = ds.samples[i];
        CHECK(s.id == i);
        CHECK(s.label < 8);
        CHECK(s.pixels.shape() == Shape{3, 32, 32});
        for (float v : s.pixels.vec()) REQUIRE((std::isfinite(v) && v >= -1.0f && v <= 1.0f));
    }
}

TEST_CASE("class means are separable") {
    // Mean colour per class: families differ in hue, so class centroids
    // must be further apart than the within-class spread shrinks to.
    const auto ds = generate_shapes({800, 16, 8, 9});
    std::vector<std::array<double, 3>> mean(8, {0, 0, 0});
    for (const auto& s : ds.samples)
        for (std::size_t c = 0; c < 3; ++c) {
            double sum = 0;
            for (std::size_t i = 0; i < 256; ++i) sum += s.pixels[c * 256 + i];
            mean[s.label][c] += sum / 256 / 100;
        }
    for (std::size_t a = 0; a < 8; ++a)
        for (std::size_t b = a + 1; b < 8; ++b) {
            double d = 0;
            for (std::size_t c = 0; c < 3; ++c) d += std::abs(mean[a][c] - mean[b][c]);
            CHECK(d > 1e-3);
        }
}

TEST_CASE("spec validation") {
    CHECK_THROWS_AS(DatasetSpec({4, 32, 8, 0}).validate(), Error);
    CHECK_THROWS_AS(DatasetSpec({100, 30, 8, 0}).validate(4), Error);
    CHECK_THROWS_AS(DatasetSpec({100, 32, 0, 0}).validate(), Error);
    CHECK_NOTHROW(DatasetSpec({100, 32, 8, 0}).validate(4));
}

TEST_CASE("dataset save/load round trip") {
    const auto dir = test::scratch_dir("data_rt");
    const auto ds = generate_shapes({20, 16, 4, 2});
    save_dataset(dir, ds);
    CHECK(std::filesystem::file_size(dir / "pixels.f32") == 20 * 3 * 16 * 16 * 4);
    CHECK(std::filesystem::file_size(dir / "labels.u16") == 20 * 2);
    const auto back = load_dataset(dir);
    REQUIRE(back.samples.size() == 20);
    CHECK(back.size == 16);
    CHECK(back.classes == 4);
    for (std::size_t i = 0; i < 20; ++i) {
        CHECK(back.samples[i].pixels == ds.samples[i].pixels);
        CHECK(back.samples[i].label == ds.samples[i].label);
    }
    CHECK_THROWS_AS(load_dataset(dir / "missing"), Error);
}

TEST_CASE("image directory loader") {
    const auto dir = test::scratch_dir("imgdir");
    for (const char* cls : {"b_second", "a_first"}) {
        std::filesystem::create_directories(dir / cls);
        for (int i = 0; i < 3; ++i) write_png(dir / cls / ("img" + std::to_string(i) + ".png"), solid(20, 20, 255));
    }
    const auto ds = load_image_dir(dir, 8);
    REQUIRE(ds.samples.size() == 6);
    CHECK(ds.classes == 2);
    for (std::size_t i = 0; i < 6; ++i) CHECK(ds.samples[i].label == (i < 3 ? 0 : 1));
    // Constant white maps to exactly 1.
    for (float v : ds.samples[0].pixels.vec()) CHECK(v == 1.0f);

    const auto empty = test::scratch_dir("imgdir_empty");
    CHECK_THROWS_AS(load_image_dir(empty, 8), Error);
    std::filesystem::create_directories(dir / "c_bad");
    std::ofstream(dir / "c_bad" / "junk.png") << "not an image";
    try {
        load_image_dir(dir, 8);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("junk.png") != std::string::npos);
    }
}

TEST_CASE("centre crop of a wide image drops equal margins") {
    // 48 x 32 with column index encoded in red: the 32 x 32 crop starts at
    // column (48 - 32) / 2 = 8, and S = 32 makes the resize an identity.
    RgbImage img = solid(48, 32, 0);
    for (std::size_t y = 0; y < 32; ++y)
        for (std::size_t x = 0; x < 48; ++x) img.at(x, y)[0] = static_cast<std::uint8_t>(5 * x);
    const auto t = image_to_tensor(img, 32);
    for (std::size_t y = 0; y < 32; y += 7)
        for (std::size_t x = 0; x < 32; ++x)
            CHECK(t[y * 32 + x] == static_cast<float>(5.0 * double(x + 8) / 127.5 - 1.0));
}

TEST_CASE("tensor_to_image inverts the [-1, 1] mapping at the extremes") {
    Tensor<float> t({3, 2, 2}, -1.0f);
    t[0] = 1.0f;
    const auto img = tensor_to_image(t.span(), 2);
    CHECK(img.at(0, 0)[0] == 255);
    CHECK(img.at(1, 0)[0] == 0);
    CHECK(img.at(0, 0)[1] == 0);
}
