// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

#include <fmt/format.h>

namespace vaerepa {

enum class ErrorKind {
    Domain,           // argument outside a mathematical domain
    Shape,            // tensor shape mismatch
    Config,           // invalid configuration or unknown key
    MissingArtifact,  // an input file produced by another stage is absent
    Numeric,          // non-finite value during a computation
    Io,               // unreadable / unwritable file or malformed format
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

template <typename... Args>
[[noreturn]] void fail(ErrorKind kind, fmt::format_string<Args...> f, Args&&... args) {
    throw Error(kind, fmt::format(f, std::forward<Args>(args)...));
}

template <typename... Args>
void require(bool cond, ErrorKind kind, fmt::format_string<Args...> f, Args&&... args) {
    if (!cond) throw Error(kind, fmt::format(f, std::forward<Args>(args)...));
}

}  // namespace vaerepa
