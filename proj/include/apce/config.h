// Copyright (C) 2026 The APCE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "apce/model.h"
#include "apce/sched.h"

namespace apce {

/// Any invalid configuration value or key. The CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Flat `key = value` pairs. '#' starts a comment line; keys are unique.
struct KeyValues {
    std::map<std::string, std::string> values;
    std::map<std::string, std::size_t> lines;  // source line of each key, 0 for overrides
};

KeyValues parse_key_values(std::string_view text, std::string_view origin = "<config>");
KeyValues load_key_values(const std::filesystem::path& path);

enum class ReportFormat { json, csv, text };

struct RunConfig {
    Mode mode = Mode::apce;
    std::size_t chunk_size = 800;
    // at most one is set; neither means fraction 0.7
    std::optional<std::size_t> max_chunks;
    std::optional<double> fraction;
    ReprioritizationConfig reprioritization;
    QueryBlendConfig query;
    LoadModel load;
    ModelConfig model;
    std::optional<std::filesystem::path> model_weights;
    std::uint64_t seed = 0;
    std::size_t max_new_tokens = 64;
    std::size_t embedding_dim = 384;
    std::string embedding_provider = "hash";  // hash | file
    std::optional<std::filesystem::path> embedding_file;
    std::optional<std::filesystem::path> input;
    std::optional<std::string> input_query;  // instruction for plain-text inputs
    std::filesystem::path out_dir = "out";
    ReportFormat format = ReportFormat::json;

    static constexpr double kDefaultFraction = 0.7;

    /// Sets one key; throws ConfigError for unknown keys and bad values.
    void set(std::string_view key, std::string_view value);
    /// Keys in the order `set` understands them.
    static const std::vector<std::string_view>& keys();
    void validate() const;  // throws ConfigError

    /// k for a document of n chunks: explicit k, or round-half-up(fraction * n)
    /// with a floor of 1. Both are capped at n.
    std::size_t resolve_k(std::size_t n_chunks) const;

    SessionConfig session(std::size_t n_chunks) const;
    /// Every key with its current value, canonical formatting, sorted by key.
    std::map<std::string, std::string> to_key_values() const;
};

RunConfig run_config_from(const KeyValues& kv);

std::size_t fraction_to_k(double fraction, std::size_t n_chunks);

std::string_view to_string(ReportFormat format);

}  // namespace apce
