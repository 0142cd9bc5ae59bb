// Copyright (C) 2026 The APCE Authors
// SPDX-License-Identifier: Apache-2.0

// apce: run, sweep, ablate and memtable subcommands.
//
// Exit codes: 0 success, 1 runtime failure, 2 bad configuration or usage,
// 3 missing or malformed input.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "apce/config.h"
#include "apce/memmodel.h"
#include "apce/runner.h"

namespace fs = std::filesystem;
using apce::ConfigError;
using apce::InputError;
using apce::RunConfig;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitInput = 3;

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("apce");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    spdlog::set_level(spdlog::level::warn);
    if (const char* env = std::getenv("APCE_LOG")) {
        const auto level = spdlog::level::from_str(env);
        // from_str maps unknown names to off; only accept it when asked for
        if (level != spdlog::level::off || std::string_view(env) == "off") spdlog::set_level(level);
        else spdlog::warn("APCE_LOG='{}' is not a log level; keeping warn", env);
    }
}

/// Command-line values shared by run, sweep and ablate. Unset options leave the
/// config file's value alone.
struct SessionFlags {
    std::string config_path;
    std::string input;
    std::string query;
    std::optional<std::uint64_t> seed;
    std::string mode;
    std::optional<std::size_t> chunk_size;
    std::optional<std::size_t> max_chunks;
    std::optional<double> fraction;
    std::optional<std::size_t> interval;
    bool no_recompute = false;
    bool no_reprioritization = false;
    std::optional<std::size_t> async_start;
    std::optional<std::size_t> max_new_tokens;
    std::string out_dir;
    std::string format;
    std::vector<std::string> overrides;

    void add_to(CLI::App& app) {
        app.add_option("input", input, "Corpus (.jsonl) or plain-text document");
        app.add_option("--config", config_path, "key = value config file");
        app.add_option("--query", query, "Instruction for a plain-text document");
        app.add_option("--seed", seed, "Model seed");
        app.add_option("--mode", mode, "dense or apce")->check(CLI::IsMember({"dense", "apce"}));
        app.add_option("--chunk-size", chunk_size, "Tokens per chunk");
        app.add_option("--max-chunks", max_chunks, "Chunks selected (k)");
        app.add_option("--fraction", fraction, "Fraction of chunks selected, in (0, 1]");
        app.add_option("--interval", interval, "Reprioritization interval in generated tokens");
        app.add_flag("--no-recompute", no_recompute, "Keep stale K/V after admissions");
        app.add_flag("--no-reprioritization", no_reprioritization, "Keep the initial selection");
        app.add_option("--async-start", async_start, "Chunks loaded before decoding starts");
        app.add_option("--max-new-tokens", max_new_tokens, "Generated tokens per run");
        app.add_option("--out-dir", out_dir, "Directory for report files");
        app.add_option("--format", format, "stdout format")->check(CLI::IsMember({"json", "csv", "text"}));
        app.add_option("--set", overrides, "Extra key=value override (repeatable)");
    }

    RunConfig resolve() const {
        RunConfig c;
        if (!config_path.empty()) {
            if (!fs::exists(config_path)) throw ConfigError(fmt::format("config file '{}' not found", config_path));
            c = apce::run_config_from(apce::load_key_values(config_path));
        }
        c.validate();
        auto set = [&](std::string_view key, const std::string& value) { c.set(key, value); };
        if (!input.empty()) set("input.path", input);
        if (!query.empty()) set("input.query", query);
        if (seed) set("seed", std::to_string(*seed));
        if (!mode.empty()) set("mode", mode);
        if (chunk_size) set("chunk_size", std::to_string(*chunk_size));
        if (max_chunks && fraction) throw ConfigError("--max-chunks and --fraction are mutually exclusive");
        if (max_chunks) {
            c.fraction.reset();
            set("max_chunks", std::to_string(*max_chunks));
        }
        if (fraction) {
            c.max_chunks.reset();
            c.fraction = *fraction;
        }
        if (interval) set("reprioritization.interval", std::to_string(*interval));
        if (no_recompute) set("reprioritization.recompute", "false");
        if (no_reprioritization) set("reprioritization.enabled", "false");
        if (async_start) set("load.async_start_chunks", std::to_string(*async_start));
        if (max_new_tokens) set("max_new_tokens", std::to_string(*max_new_tokens));
        if (!out_dir.empty()) set("output.dir", out_dir);
        if (!format.empty()) set("output.format", format);
        for (const auto& o : overrides) {
            const auto eq = o.find('=');
            if (eq == std::string::npos) throw ConfigError(fmt::format("--set expects key=value, got '{}'", o));
            set(std::string_view(o).substr(0, eq), o.substr(eq + 1));
        }
        c.validate();
        return c;
    }
};

std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(now)));
}

// Wall-clock timings live in profile.json next to the reports, so the reports
// themselves stay byte-identical across invocations.
class ProfileLog {
public:
    void add(std::string name, double wall_seconds) {
        entries_.push_back({{"name", std::move(name)}, {"wall_seconds", wall_seconds}});
    }
    nlohmann::json to_json() const {
        return {{"generated_at", timestamp_utc()}, {"entries", entries_}};
    }

private:
    nlohmann::json entries_ = nlohmann::json::array();
};

std::string file_safe(std::string_view s) {
    std::string out;
    for (char c : s) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                        c == '_' || c == '.';
        out += ok ? c : '_';
    }
    return out;
}

void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    out << content;
    spdlog::info("wrote {}", path.string());
}

std::string run_id_for(const RunConfig& c, const apce::CorpusRecord& r) {
    return fmt::format("{}-{}-s{}", r.id, apce::to_string(c.mode), c.seed);
}

int cmd_run(const SessionFlags& flags) {
    const RunConfig config = flags.resolve();
    const auto records = apce::load_inputs(config);
    const apce::Runner runner(config);

    std::string csv = apce::run_csv_header();
    std::string stdout_text;
    ProfileLog profile;
    nlohmann::json all = nlohmann::json::array();
    for (const auto& record : records) {
        const auto wall_start = std::chrono::steady_clock::now();
        const auto outcome = runner.run(record, run_id_for(config, record));
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
        spdlog::info("{}: ttft {:.4f} total {:.4f}", outcome.run_id, outcome.session.trace.ttft,
                     outcome.session.trace.total_time);

        profile.add(outcome.run_id, wall);
        auto report = apce::run_report(outcome);
        write_file(config.out_dir / fmt::format("run_{}.json", file_safe(outcome.run_id)), report.dump(2) + "\n");
        csv += apce::run_csv_row(outcome);
        if (config.format == apce::ReportFormat::text) stdout_text += apce::run_text(outcome);
        all.push_back(std::move(report));
    }
    write_file(config.out_dir / "runs.csv", csv);
    write_file(config.out_dir / "profile.json", profile.to_json().dump(2) + "\n");
    switch (config.format) {
        case apce::ReportFormat::json: std::cout << (all.size() == 1 ? all.front() : all).dump(2) << "\n"; break;
        case apce::ReportFormat::csv: std::cout << csv; break;
        case apce::ReportFormat::text: std::cout << stdout_text; break;
    }
    return kExitOk;
}

std::vector<std::string> split_values(const std::string& text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const auto piece = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!piece.empty()) out.push_back(piece);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

int run_sweep(const SessionFlags& flags, apce::SweepAxis axis, const std::vector<std::string>& values,
              bool baseline, std::string_view kind) {
    if (values.empty()) throw ConfigError("a sweep needs at least one value");
    const RunConfig base = flags.resolve();
    const auto records = apce::load_inputs(base);
    const apce::Runner runner(base);
    const auto wall_start = std::chrono::steady_clock::now();

    std::vector<apce::SweepRow> rows;
    std::vector<apce::RunOutcome> all_runs;
    auto run_group = [&](const RunConfig& cfg, const std::string& value, const std::string& label) {
        std::vector<apce::RunOutcome> group;
        for (const auto& record : records) {
            const auto id = fmt::format("{}-{}={}", run_id_for(cfg, record), apce::to_string(axis), value);
            group.push_back(runner.run(cfg, record, id));
        }
        rows.push_back(apce::aggregate(std::string(apce::to_string(axis)), value, label, group));
        spdlog::info("{}: {} runs", label, group.size());
        all_runs.insert(all_runs.end(), std::make_move_iterator(group.begin()), std::make_move_iterator(group.end()));
    };

    if (baseline) {
        RunConfig dense = base;
        dense.mode = apce::Mode::dense;
        run_group(dense, "-", "Dense");
    }
    for (const auto& v : values) {
        const RunConfig cfg = apce::apply_sweep_value(base, axis, v);
        run_group(cfg, v, apce::sweep_label(cfg, axis, v));
    }

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    const auto report = apce::sweep_report(kind, rows, all_runs);
    const auto csv = apce::sweep_csv(rows);
    ProfileLog profile;
    profile.add(std::string(kind), wall);
    write_file(base.out_dir / fmt::format("{}.json", kind), report.dump(2) + "\n");
    write_file(base.out_dir / fmt::format("{}.csv", kind), csv);
    write_file(base.out_dir / "profile.json", profile.to_json().dump(2) + "\n");
    switch (base.format) {
        case apce::ReportFormat::json: std::cout << report["rows"].dump(2) << "\n"; break;
        case apce::ReportFormat::csv: std::cout << csv; break;
        case apce::ReportFormat::text: std::cout << apce::sweep_text(rows); break;
    }
    return kExitOk;
}

struct MemtableFlags {
    std::vector<std::string> rows;
    bool flag_inconsistent = false;
    std::string format = "text";
    std::string out_dir;
    std::uint64_t d_q = apce::mem::Dims{}.d_q;
    std::uint64_t d_kv = apce::mem::Dims{}.d_kv;
    std::uint64_t bytes = apce::mem::Dims{}.bytes_per_element;
};

// "L=1000,k=1,m=500": a dense row of L tokens, plus an apce row when k and m are given.
std::vector<apce::mem::RowInput> parse_mem_row(const std::string& text, std::size_t n, const apce::mem::Dims& dims) {
    std::optional<std::uint64_t> L, k, m;
    for (const auto& part : split_values(text)) {
        const auto eq = part.find('=');
        if (eq == std::string::npos) throw ConfigError(fmt::format("--row expects L=..,k=..,m=.., got '{}'", text));
        const auto key = part.substr(0, eq);
        std::uint64_t value = 0;
        try {
            std::size_t used = 0;
            value = std::stoull(part.substr(eq + 1), &used);
            if (used != part.size() - eq - 1) throw std::invalid_argument(part);
        } catch (const std::logic_error&) {
            throw ConfigError(fmt::format("--row: '{}' is not a non-negative integer", part));
        }
        if (key == "L") L = value;
        else if (key == "k") k = value;
        else if (key == "m") m = value;
        else throw ConfigError(fmt::format("--row: unknown field '{}'", key));
    }
    if (!L) throw ConfigError(fmt::format("--row '{}' needs L", text));
    if (k.has_value() != m.has_value()) throw ConfigError(fmt::format("--row '{}' needs both k and m", text));
    const auto context = fmt::format("row{}", n);
    std::vector<apce::mem::RowInput> out;
    out.push_back({apce::mem::MemConfig{context, apce::mem::Method::dense, *L, 0, 0, dims}, std::nullopt});
    if (k) out.push_back({apce::mem::MemConfig{context, apce::mem::Method::apce, *L, *k, *m, dims}, std::nullopt});
    for (const auto& r : out) {
        try {
            r.config.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(fmt::format("--row '{}': {}", text, e.what()));
        }
    }
    return out;
}

int cmd_memtable(const MemtableFlags& flags) {
    const apce::mem::Dims dims{flags.d_q, flags.d_kv, flags.bytes};
    if (dims.d_q == 0 || dims.d_kv == 0 || dims.bytes_per_element == 0) throw ConfigError("dims must be positive");
    std::vector<apce::mem::RowInput> rows;
    if (flags.rows.empty()) {
        rows = apce::mem::reference_rows(dims);
    } else {
        for (std::size_t i = 0; i < flags.rows.size(); ++i) {
            auto r = parse_mem_row(flags.rows[i], i + 1, dims);
            rows.insert(rows.end(), r.begin(), r.end());
        }
    }
    const auto report = apce::mem::memory_report(rows);
    std::string out;
    std::string ext = flags.format;
    if (flags.format == "json") out = apce::mem::to_json(report).dump(2) + "\n";
    else if (flags.format == "csv") out = apce::mem::format_csv(report);
    else {
        out = apce::mem::format_text(report, flags.flag_inconsistent);
        ext = "txt";
    }
    std::cout << out;
    if (!flags.out_dir.empty()) write_file(fs::path(flags.out_dir) / fmt::format("memtable.{}", ext), out);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();
    CLI::App app{"Query-aware chunk selection for long-context inference"};
    app.require_subcommand(1);

    SessionFlags run_flags;
    auto* run = app.add_subcommand("run", "One generation session per input record");
    run_flags.add_to(*run);

    SessionFlags sweep_flags;
    std::string axis;
    std::string values;
    bool sweep_baseline = false;
    auto* sweep = app.add_subcommand("sweep", "One aggregate row per value of an axis");
    sweep_flags.add_to(*sweep);
    sweep->add_option("--axis", axis, "n_chunks, chunk_size or reprioritization_interval")->required();
    sweep->add_option("--values", values, "Comma-separated values; n_chunks values with '.' are fractions")->required();
    sweep->add_flag("--baseline", sweep_baseline, "Add a dense row first");

    SessionFlags ablate_flags;
    std::string ablate_values = "1,5,10,25,50,100,200";
    auto* ablate = app.add_subcommand("ablate", "Reprioritization interval ablation with replacement counts");
    ablate_flags.add_to(*ablate);
    ablate->add_option("--values", ablate_values, "Comma-separated intervals")->capture_default_str();

    MemtableFlags mem_flags;
    auto* memtable = app.add_subcommand("memtable", "Per-layer attention memory footprint table");
    memtable->add_option("--row", mem_flags.rows, "Custom row L=..[,k=..,m=..] (repeatable)");
    memtable->add_flag("--flag-inconsistent", mem_flags.flag_inconsistent, "Mark cells that differ from the reference");
    memtable->add_option("--format", mem_flags.format, "Output format")->capture_default_str()
        ->check(CLI::IsMember({"json", "csv", "text"}));
    memtable->add_option("--out-dir", mem_flags.out_dir, "Also write the table here");
    memtable->add_option("--d-q", mem_flags.d_q, "Query width")->capture_default_str();
    memtable->add_option("--d-kv", mem_flags.d_kv, "K (or V) width")->capture_default_str();
    memtable->add_option("--bytes", mem_flags.bytes, "Bytes per element")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*run) return cmd_run(run_flags);
        if (*sweep) return run_sweep(sweep_flags, apce::parse_sweep_axis(axis), split_values(values), sweep_baseline, "sweep");
        if (*ablate) {
            return run_sweep(ablate_flags, apce::SweepAxis::reprioritization_interval, split_values(ablate_values), false,
                             "ablation");
        }
        if (*memtable) return cmd_memtable(mem_flags);
    } catch (const ConfigError& e) {
        spdlog::error("config: {}", e.what());
        return kExitConfig;
    } catch (const InputError& e) {
        spdlog::error("input: {}", e.what());
        return kExitInput;
    } catch (const apce::ParseError& e) {
        spdlog::error("input: {}", e.what());
        return kExitInput;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitFailure;
    }
    return kExitFailure;
}
