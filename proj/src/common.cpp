// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <charconv>
#include <sstream>

#include "vaerepa/binio.hpp"
#include "vaerepa/kv_config.hpp"
#include "vaerepa/tensor.hpp"

namespace vaerepa {

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) out.push_back(trim(cur));
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

KvConfig KvConfig::parse(const std::string& text, const std::string& origin) {
    KvConfig cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        require(eq != std::string::npos, ErrorKind::Config, "{}:{}: expected `key = value`", origin, lineno);
        const std::string key = trim(t.substr(0, eq));
        require(!key.empty(), ErrorKind::Config, "{}:{}: empty key", origin, lineno);
        cfg.values_[key] = trim(t.substr(eq + 1));
    }
    return cfg;
}

KvConfig KvConfig::load(const std::filesystem::path& path) {
    std::ifstream f(path);
    require(static_cast<bool>(f), ErrorKind::Io, "cannot read config {}", path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path.string());
}

std::string KvConfig::str(const std::string& key) const {
    const auto it = values_.find(key);
    require(it != values_.end(), ErrorKind::Config, "missing config key `{}`", key);
    return it->second;
}

double KvConfig::real(const std::string& key) const {
    const std::string s = str(key);
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    fail(ErrorKind::Config, "config key `{}`: expected a number, got `{}`", key, s);
}

std::int64_t KvConfig::integer(const std::string& key) const {
    const std::string s = str(key);
    std::int64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    require(ec == std::errc() && p == s.data() + s.size(), ErrorKind::Config,
            "config key `{}`: expected an integer, got `{}`", key, s);
    return v;
}

std::uint64_t KvConfig::u64(const std::string& key) const {
    const std::string s = str(key);
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    require(ec == std::errc() && p == s.data() + s.size(), ErrorKind::Config,
            "config key `{}`: expected an unsigned integer, got `{}`", key, s);
    return v;
}

bool KvConfig::boolean(const std::string& key) const {
    const std::string s = str(key);
    if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
    if (s == "0" || s == "false" || s == "no" || s == "off") return false;
    fail(ErrorKind::Config, "config key `{}`: expected a boolean, got `{}`", key, s);
}

std::vector<std::int64_t> KvConfig::int_list(const std::string& key) const {
    std::vector<std::int64_t> out;
    for (const std::string& part : split(str(key), ',')) {
        if (part.empty()) continue;
        std::int64_t v = 0;
        const auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
        require(ec == std::errc() && p == part.data() + part.size(), ErrorKind::Config,
                "config key `{}`: bad list element `{}`", key, part);
        out.push_back(v);
    }
    return out;
}

std::string KvConfig::render() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
}

void KvConfig::save(const std::filesystem::path& path) const {
    std::ofstream f(path);
    require(static_cast<bool>(f), ErrorKind::Io, "cannot write {}", path.string());
    f << render();
}

namespace binio {

void put_f32s(std::ostream& os, std::span<const float> v) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
    } else {
        for (float x : v) put(os, x);
    }
}

void get_f32s(std::istream& is, std::span<float> out, const std::filesystem::path& path) {
    if constexpr (std::endian::native == std::endian::little) {
        is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size() * sizeof(float)));
        require(static_cast<bool>(is), ErrorKind::Io, "{}: truncated file", path.string());
    } else {
        for (float& x : out) x = get<float>(is, path);
    }
}

void put_magic(std::ostream& os, const char (&magic)[5]) { os.write(magic, 4); }

void expect_magic(std::istream& is, const char (&magic)[5], const std::filesystem::path& path) {
    char got[4] = {};
    is.read(got, 4);
    require(static_cast<bool>(is) && std::equal(got, got + 4, magic), ErrorKind::Io, "{}: bad magic (expected {})",
            path.string(), magic);
}

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream f(path, std::ios::binary);
    require(static_cast<bool>(f), ErrorKind::Io, "cannot write {}", path.string());
    return f;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    require(static_cast<bool>(f), ErrorKind::MissingArtifact, "cannot read {}", path.string());
    return f;
}

}  // namespace binio
}  // namespace vaerepa
