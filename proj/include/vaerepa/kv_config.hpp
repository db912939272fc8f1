// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace vaerepa {

/// Flat `key = value` text configuration. Lines starting with '#' are
/// comments; blank lines are ignored; later assignments win.
class KvConfig {
public:
    static KvConfig parse(const std::string& text, const std::string& origin = "<string>");
    static KvConfig load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::map<std::string, std::string>& values() const { return values_; }

    std::string str(const std::string& key) const;
    double real(const std::string& key) const;
    std::int64_t integer(const std::string& key) const;
    std::uint64_t u64(const std::string& key) const;
    bool boolean(const std::string& key) const;
    std::vector<std::int64_t> int_list(const std::string& key) const;

    /// Rendered in key order; `parse(render())` reproduces the config.
    std::string render() const;
    void save(const std::filesystem::path& path) const;

private:
    std::map<std::string, std::string> values_;
};

std::vector<std::string> split(const std::string& s, char sep);
std::string trim(const std::string& s);

}  // namespace vaerepa
