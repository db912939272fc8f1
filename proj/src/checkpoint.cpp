// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

#include "vaerepa/checkpoint.hpp"

#include <algorithm>

#include "vaerepa/binio.hpp"

namespace vaerepa {

const Tensor<float>& Checkpoint::get(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    fail(ErrorKind::Io, "checkpoint has no tensor `{}`", name);
}

bool Checkpoint::has(const std::string& name) const {
    return std::any_of(tensors.begin(), tensors.end(), [&](const auto& e) { return e.first == name; });
}

void Checkpoint::add_params(const std::string& prefix, const ad::ParamStore<float>& store) {
    for (const auto& p : store.all()) add(prefix + p.name, p.value);
}

void Checkpoint::load_params(const std::string& prefix, ad::ParamStore<float>& store) const {
    for (auto& p : store.all()) {
        const Tensor<float>& t = get(prefix + p.name);
        require(t.shape() == p.value.shape(), ErrorKind::Shape, "checkpoint tensor `{}{}` has shape {}, expected {}",
                prefix, p.name, shape_str(t.shape()), shape_str(p.value.shape()));
        p.value = t;
    }
}

void Checkpoint::save(const std::filesystem::path& path) const {
    auto os = binio::open_out(path);
    binio::put_magic(os, "VRCK");
    binio::put<std::uint32_t>(os, kVersion);
    binio::put<std::uint64_t>(os, step);
    const std::string text = meta.render();
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        binio::put<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
        binio::put_f32s(os, t.span());
    }
    require(static_cast<bool>(os), ErrorKind::Io, "failed writing {}", path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    auto is = binio::open_in(path);
    binio::expect_magic(is, "VRCK", path);
    const auto version = binio::get<std::uint32_t>(is, path);
    require(version == kVersion, ErrorKind::Io, "{}: unsupported checkpoint version {}", path.string(), version);
    Checkpoint ck;
    ck.step = binio::get<std::uint64_t>(is, path);
    std::string text(binio::get<std::uint32_t>(is, path), '\0');
    is.read(text.data(), static_cast<std::streamsize>(text.size()));
    require(static_cast<bool>(is), ErrorKind::Io, "{}: truncated metadata", path.string());
    ck.meta = KvConfig::parse(text, path.string());
    const auto count = binio::get<std::uint32_t>(is, path);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name(binio::get<std::uint16_t>(is, path), '\0');
        is.read(name.data(), static_cast<std::streamsize>(name.size()));
        Shape shape(binio::get<std::uint32_t>(is, path));
        for (auto& d : shape) d = binio::get<std::uint32_t>(is, path);
        Tensor<float> t(shape);
        binio::get_f32s(is, t.span(), path);
        ck.add(std::move(name), std::move(t));
    }
    return ck;
}

}  // namespace vaerepa
