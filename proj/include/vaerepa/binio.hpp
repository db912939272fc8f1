// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

// Little-endian binary helpers shared by the on-disk formats.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <type_traits>

#include "vaerepa/error.hpp"

namespace vaerepa::binio {

template <typename T>
    requires std::is_arithmetic_v<T>
void put(std::ostream& os, T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
    requires std::is_arithmetic_v<T>
T get(std::istream& is, const std::filesystem::path& path) {
    unsigned char b[sizeof(T)];
    is.read(reinterpret_cast<char*>(b), sizeof(T));
    require(static_cast<bool>(is), ErrorKind::Io, "{}: truncated file", path.string());
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
}

void put_f32s(std::ostream& os, std::span<const float> v);
void get_f32s(std::istream& is, std::span<float> out, const std::filesystem::path& path);

void put_magic(std::ostream& os, const char (&magic)[5]);
void expect_magic(std::istream& is, const char (&magic)[5], const std::filesystem::path& path);

std::ofstream open_out(const std::filesystem::path& path);
std::ifstream open_in(const std::filesystem::path& path);

}  // namespace vaerepa::binio
