// Copyright (C) 2026 The APCE Authors
// SPDX-License-Identifier: Apache-2.0

#include "apce/config.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <fmt/format.h>

namespace apce {

namespace {

std::string_view trim(std::string_view s) {
    const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

template <typename T>
T parse_unsigned(std::string_view key, std::string_view value) {
    T out{};
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (value.empty() || ec != std::errc{} || ptr != end) {
        throw ConfigError(fmt::format("{}: expected a non-negative integer, got '{}'", key, value));
    }
    return out;
}

double parse_double(std::string_view key, std::string_view value) {
    double out = 0.0;
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (value.empty() || ec != std::errc{} || ptr != end || !std::isfinite(out)) {
        throw ConfigError(fmt::format("{}: expected a finite number, got '{}'", key, value));
    }
    return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    throw ConfigError(fmt::format("{}: expected true or false, got '{}'", key, value));
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

struct Field {
    std::string_view key;
    std::function<void(RunConfig&, std::string_view, std::string_view)> set;
    std::function<std::optional<std::string>(const RunConfig&)> get;  // nullopt when unset
};

template <typename T>
Field unsigned_field(std::string_view key, T RunConfig::*member) {
    return {key, [member](RunConfig& c, std::string_view k, std::string_view v) { c.*member = parse_unsigned<T>(k, v); },
            [member](const RunConfig& c) { return std::optional(fmt::format("{}", c.*member)); }};
}

template <typename Sub, typename T>
Field nested_unsigned(std::string_view key, Sub RunConfig::*sub, T Sub::*member) {
    return {key,
            [sub, member](RunConfig& c, std::string_view k, std::string_view v) { (c.*sub).*member = parse_unsigned<T>(k, v); },
            [sub, member](const RunConfig& c) { return std::optional(fmt::format("{}", (c.*sub).*member)); }};
}

template <typename Sub>
Field nested_double(std::string_view key, Sub RunConfig::*sub, double Sub::*member) {
    return {key,
            [sub, member](RunConfig& c, std::string_view k, std::string_view v) { (c.*sub).*member = parse_double(k, v); },
            [sub, member](const RunConfig& c) { return std::optional(fmt::format("{}", (c.*sub).*member)); }};
}

template <typename Sub>
Field nested_bool(std::string_view key, Sub RunConfig::*sub, bool Sub::*member) {
    return {key,
            [sub, member](RunConfig& c, std::string_view k, std::string_view v) { (c.*sub).*member = parse_bool(k, v); },
            [sub, member](const RunConfig& c) { return std::optional(fmt_bool((c.*sub).*member)); }};
}

Field path_field(std::string_view key, std::optional<std::filesystem::path> RunConfig::*member) {
    return {key,
            [member](RunConfig& c, std::string_view, std::string_view v) {
                if (v.empty()) c.*member = std::nullopt;
                else c.*member = std::filesystem::path(std::string(v));
            },
            [member](const RunConfig& c) -> std::optional<std::string> {
                if (!(c.*member)) return std::nullopt;
                return (c.*member)->generic_string();
            }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
        {"mode", [](RunConfig& c, std::string_view, std::string_view v) {
             try {
                 c.mode = parse_mode(v);
             } catch (const std::invalid_argument& e) {
                 throw ConfigError(fmt::format("mode: {}", e.what()));
             }
         },
         [](const RunConfig& c) { return std::optional(std::string(to_string(c.mode))); }},
        unsigned_field("chunk_size", &RunConfig::chunk_size),
        {"max_chunks",
         [](RunConfig& c, std::string_view k, std::string_view v) { c.max_chunks = parse_unsigned<std::size_t>(k, v); },
         [](const RunConfig& c) -> std::optional<std::string> {
             if (!c.max_chunks) return std::nullopt;
             return fmt::format("{}", *c.max_chunks);
         }},
        {"fraction", [](RunConfig& c, std::string_view k, std::string_view v) { c.fraction = parse_double(k, v); },
         [](const RunConfig& c) -> std::optional<std::string> {
             if (!c.fraction) return std::nullopt;
             return fmt::format("{}", *c.fraction);
         }},
        {"seed",
         [](RunConfig& c, std::string_view k, std::string_view v) {
             c.seed = parse_unsigned<std::uint64_t>(k, v);
             c.model.init_seed = c.seed;
         },
         [](const RunConfig& c) { return std::optional(fmt::format("{}", c.seed)); }},
        unsigned_field("max_new_tokens", &RunConfig::max_new_tokens),
        nested_bool("reprioritization.enabled", &RunConfig::reprioritization, &ReprioritizationConfig::enabled),
        nested_unsigned("reprioritization.interval", &RunConfig::reprioritization, &ReprioritizationConfig::interval),
        nested_bool("reprioritization.recompute", &RunConfig::reprioritization, &ReprioritizationConfig::recompute),
        nested_double("reprioritization.min_gain", &RunConfig::reprioritization, &ReprioritizationConfig::min_gain),
        nested_unsigned("query.tail_chars", &RunConfig::query, &QueryBlendConfig::tail_chars),
        nested_unsigned("query.recent_tokens", &RunConfig::query, &QueryBlendConfig::recent_tokens),
        nested_double("query.alpha", &RunConfig::query, &QueryBlendConfig::alpha),
        nested_double("load.per_chunk_load_latency", &RunConfig::load, &LoadModel::per_chunk_load_latency),
        nested_double("load.prefill_token_latency", &RunConfig::load, &LoadModel::prefill_token_latency),
        nested_double("load.decode_latency", &RunConfig::load, &LoadModel::decode_latency),
        nested_unsigned("load.async_start_chunks", &RunConfig::load, &LoadModel::async_start_chunks),
        nested_unsigned("model.n_layers", &RunConfig::model, &ModelConfig::n_layers),
        nested_unsigned("model.n_heads", &RunConfig::model, &ModelConfig::n_heads),
        nested_unsigned("model.d_model", &RunConfig::model, &ModelConfig::d_model),
        nested_unsigned("model.d_head", &RunConfig::model, &ModelConfig::d_head),
        nested_unsigned("model.d_kv_total", &RunConfig::model, &ModelConfig::d_kv_total),
        nested_unsigned("model.d_ff", &RunConfig::model, &ModelConfig::d_ff),
        nested_unsigned("model.vocab_size", &RunConfig::model, &ModelConfig::vocab_size),
        nested_double("model.rope_theta", &RunConfig::model, &ModelConfig::rope_theta),
        nested_unsigned("model.max_position", &RunConfig::model, &ModelConfig::max_position),
        path_field("model.weights", &RunConfig::model_weights),
        unsigned_field("embedding.dim", &RunConfig::embedding_dim),
        {"embedding.provider",
         [](RunConfig& c, std::string_view k, std::string_view v) {
             if (v != "hash" && v != "file") throw ConfigError(fmt::format("{}: expected hash or file, got '{}'", k, v));
             c.embedding_provider = std::string(v);
         },
         [](const RunConfig& c) { return std::optional(c.embedding_provider); }},
        path_field("embedding.file", &RunConfig::embedding_file),
        path_field("input.path", &RunConfig::input),
        {"input.query",
         [](RunConfig& c, std::string_view, std::string_view v) {
             if (v.empty()) c.input_query = std::nullopt;
             else c.input_query = std::string(v);
         },
         [](const RunConfig& c) { return c.input_query; }},
        {"output.dir", [](RunConfig& c, std::string_view, std::string_view v) { c.out_dir = std::string(v); },
         [](const RunConfig& c) { return std::optional(c.out_dir.generic_string()); }},
        {"output.format",
         [](RunConfig& c, std::string_view k, std::string_view v) {
             if (v == "json") c.format = ReportFormat::json;
             else if (v == "csv") c.format = ReportFormat::csv;
             else if (v == "text") c.format = ReportFormat::text;
             else throw ConfigError(fmt::format("{}: expected json, csv or text, got '{}'", k, v));
         },
         [](const RunConfig& c) { return std::optional(std::string(to_string(c.format))); }},
    };
    return f;
}

}  // namespace

KeyValues parse_key_values(std::string_view text, std::string_view origin) {
    KeyValues kv;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError(fmt::format("{}:{}: expected 'key = value'", origin, line_no));
        }
        const std::string key(trim(line.substr(0, eq)));
        const std::string value(trim(line.substr(eq + 1)));
        if (key.empty()) throw ConfigError(fmt::format("{}:{}: empty key", origin, line_no));
        if (kv.values.contains(key)) {
            throw ConfigError(fmt::format("{}:{}: duplicate key '{}' (first set on line {})", origin, line_no, key,
                                          kv.lines.at(key)));
        }
        kv.values.emplace(key, value);
        kv.lines.emplace(key, line_no);
    }
    return kv;
}

KeyValues load_key_values(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(fmt::format("cannot open config file '{}'", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_key_values(ss.str(), path.string());
}

void RunConfig::set(std::string_view key, std::string_view value) {
    for (const auto& f : fields()) {
        if (f.key == key) {
            f.set(*this, key, value);
            return;
        }
    }
    throw ConfigError(fmt::format("unknown config key '{}'", key));
}

const std::vector<std::string_view>& RunConfig::keys() {
    static const std::vector<std::string_view> k = [] {
        std::vector<std::string_view> out;
        for (const auto& f : fields()) out.push_back(f.key);
        return out;
    }();
    return k;
}

void RunConfig::validate() const {
    if (max_chunks && fraction) throw ConfigError("set either max_chunks or fraction, not both");
    if (max_chunks && *max_chunks == 0) throw ConfigError("max_chunks must be at least 1");
    if (fraction && !(*fraction > 0.0 && *fraction <= 1.0)) {
        throw ConfigError(fmt::format("fraction must be in (0, 1], got {}", *fraction));
    }
    if (!(query.alpha >= 0.0 && query.alpha <= 1.0)) {
        throw ConfigError(fmt::format("query.alpha must be in [0, 1], got {}", query.alpha));
    }
    if (embedding_dim == 0) throw ConfigError("embedding.dim must be at least 1");
    if (embedding_provider == "file" && !embedding_file) {
        throw ConfigError("embedding.provider = file needs embedding.file");
    }
    try {
        SessionConfig s = session(1);
        s.validate();
        if (!model_weights) model.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

std::size_t fraction_to_k(double fraction, std::size_t n_chunks) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("fraction must be in (0, 1]");
    const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n_chunks) + 0.5));
    return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(n_chunks, 1));
}

std::size_t RunConfig::resolve_k(std::size_t n_chunks) const {
    if (max_chunks) return std::min(*max_chunks, n_chunks);
    return fraction_to_k(fraction.value_or(kDefaultFraction), n_chunks);
}

SessionConfig RunConfig::session(std::size_t n_chunks) const {
    SessionConfig s;
    s.mode = mode;
    s.chunk_size = chunk_size;
    s.max_chunks = resolve_k(n_chunks);
    s.reprioritization = reprioritization;
    s.query = query;
    s.load = load;
    s.max_new_tokens = max_new_tokens;
    return s;
}

std::map<std::string, std::string> RunConfig::to_key_values() const {
    std::map<std::string, std::string> out;
    for (const auto& f : fields()) {
        if (auto v = f.get(*this)) out.emplace(std::string(f.key), std::move(*v));
    }
    return out;
}

RunConfig run_config_from(const KeyValues& kv) {
    RunConfig c;
    for (const auto& [key, value] : kv.values) {
        try {
            c.set(key, value);
        } catch (const ConfigError& e) {
            const auto line = kv.lines.find(key);
            if (line == kv.lines.end() || line->second == 0) throw;
            throw ConfigError(fmt::format("line {}: {}", line->second, e.what()));
        }
    }
    return c;
}

std::string_view to_string(ReportFormat format) {
    switch (format) {
        case ReportFormat::json: return "json";
        case ReportFormat::csv: return "csv";
        case ReportFormat::text: return "text";
    }
    return "json";
}

}  // namespace apce
