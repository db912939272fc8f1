// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

// Subcommand dispatch for the `vaerepa` executable.
//
// Every subcommand reads the same closed key set (defaults below, then the
// --config file, then --set overrides, then --seed) and writes only under
// <out>/<subcommand dir>/, including a run.meta with the resolved config.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vaerepa/error.hpp"
#include "vaerepa/kv_config.hpp"

namespace vaerepa::cli {

struct KeySpec {
    const char* name;
    const char* default_value;
    const char* help;
};

std::span<const KeySpec> config_keys();
KvConfig default_config();

/// Rejects keys outside config_keys(), listing the valid ones.
void check_keys(const KvConfig& kv, const std::string& origin);

/// Defaults < file < `key=value` overrides < seed.
KvConfig resolve_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides,
                        std::optional<std::uint64_t> seed);

std::span<const char* const> subcommands();

/// Runs one subcommand; throws vaerepa::Error on failure.
void dispatch(const std::string& subcommand, KvConfig cfg, const std::filesystem::path& out);

/// 2 config, 3 missing artifact, 4 numeric, 1 anything else.
int exit_code(ErrorKind kind);

int run_main(int argc, char** argv);

}  // namespace vaerepa::cli
