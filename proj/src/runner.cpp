// Copyright (C) 2026 The APCE Authors
// SPDX-License-Identifier: Apache-2.0

#include "apce/runner.h"

#include <algorithm>
#include <filesystem>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <nlohmann/json.hpp>

namespace apce {

namespace {

Model make_model(const RunConfig& config) {
    if (config.model_weights) {
        if (!std::filesystem::exists(*config.model_weights)) {
            throw InputError(fmt::format("model weights '{}' not found", config.model_weights->string()));
        }
        return Model::load(*config.model_weights);
    }
    return Model(config.model);
}

std::optional<ExternalEmbeddings> make_external(const RunConfig& config) {
    if (config.embedding_provider != "file") return std::nullopt;
    const auto& path = *config.embedding_file;
    if (!std::filesystem::exists(path)) throw InputError(fmt::format("embedding file '{}' not found", path.string()));
    auto ext = load_external_embeddings(path);
    if (ext.dim != config.embedding_dim) {
        throw ConfigError(fmt::format("embedding file has dimension {}, embedding.dim is {}", ext.dim,
                                      config.embedding_dim));
    }
    return ext;
}

}  // namespace

Runner::Runner(const RunConfig& config)
    : config_(config),
      model_(make_model(config)),
      tokenizer_(model_.config().vocab_size),
      provider_(config.embedding_dim),
      external_(make_external(config)) {}

RunOutcome Runner::run(const RunConfig& config, const CorpusRecord& record, std::string run_id) const {
    const auto doc = tokenizer_.tokenize(record.text);
    const std::size_t n_chunks = config.chunk_size == 0 ? 0 : (doc.size() + config.chunk_size - 1) / config.chunk_size;

    std::optional<EmbeddingStore> store;
    if (external_) store = external_->to_store(n_chunks);

    RunOutcome out;
    out.run_id = std::move(run_id);
    out.record_id = record.id;
    out.config = config;
    out.session = simulate_generation(model_, provider_, tokenizer_, doc.tokens, record.query, config.session(n_chunks),
                                      store ? &*store : nullptr);

    Vocabulary vocab(tokenizer_);
    vocab.observe(record.text);
    vocab.observe(record.query);
    out.output_text = vocab.detokenize(out.session.trace.output_tokens);
    if (record.reference) {
        out.rouge = rouge_l_f1(out.output_text, *record.reference);
        if (!scoring_tokens(*record.reference).empty()) {
            out.similarity = embedding_similarity(provider_, tokenizer_, out.output_text, *record.reference);
        }
    }
    return out;
}

std::vector<CorpusRecord> load_inputs(const RunConfig& config) {
    if (!config.input) throw InputError("no input given");
    const auto& path = *config.input;
    if (!std::filesystem::is_regular_file(path)) throw InputError(fmt::format("input '{}' not found", path.string()));
    std::vector<CorpusRecord> records;
    if (path.extension() == ".jsonl") {
        records = load_corpus_jsonl(path);
        if (records.empty()) throw ParseError(fmt::format("{}: no records", path.string()));
    } else {
        if (!config.input_query) throw ConfigError("plain-text input needs a query (input.query or --query)");
        records.push_back(load_text_record(path, *config.input_query));
    }
    if (config.embedding_provider == "file" && records.size() != 1) {
        throw ConfigError("embedding.provider = file covers one document; the corpus has several records");
    }
    return records;
}

SweepAxis parse_sweep_axis(std::string_view text) {
    if (text == "n_chunks") return SweepAxis::n_chunks;
    if (text == "chunk_size") return SweepAxis::chunk_size;
    if (text == "reprioritization_interval") return SweepAxis::reprioritization_interval;
    throw ConfigError(fmt::format("unknown sweep axis '{}' (n_chunks, chunk_size, reprioritization_interval)", text));
}

std::string_view to_string(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::n_chunks: return "n_chunks";
        case SweepAxis::chunk_size: return "chunk_size";
        case SweepAxis::reprioritization_interval: return "reprioritization_interval";
    }
    return "n_chunks";
}

RunConfig apply_sweep_value(const RunConfig& base, SweepAxis axis, std::string_view value) {
    RunConfig c = base;
    switch (axis) {
        case SweepAxis::n_chunks:
            c.max_chunks.reset();
            c.fraction.reset();
            c.set(value.find('.') != std::string_view::npos ? "fraction" : "max_chunks", value);
            break;
        case SweepAxis::chunk_size: c.set("chunk_size", value); break;
        case SweepAxis::reprioritization_interval: c.set("reprioritization.interval", value); break;
    }
    c.validate();
    return c;
}

std::string sweep_label(const RunConfig& config, SweepAxis axis, std::string_view value) {
    if (config.mode == Mode::dense) return "Dense";
    switch (axis) {
        case SweepAxis::n_chunks:
            return value.find('.') != std::string_view::npos ? fmt::format("APCE ({} of chunks)", value)
                                                              : fmt::format("APCE ({} chunks)", value);
        case SweepAxis::chunk_size: return fmt::format("APCE ({} token chksize)", value);
        case SweepAxis::reprioritization_interval: return fmt::format("APCE (interval {})", value);
    }
    return "APCE";
}

SweepRow aggregate(std::string axis, std::string value, std::string label, std::span<const RunOutcome> runs) {
    if (runs.empty()) throw std::invalid_argument("aggregate of no runs");
    SweepRow row;
    row.axis = std::move(axis);
    row.value = std::move(value);
    row.label = std::move(label);
    row.mode = std::string(to_string(runs.front().session.mode));
    row.runs = runs.size();
    std::vector<GenerationTrace> traces;
    std::vector<double> rouge;
    for (const auto& r : runs) {
        traces.push_back(r.session.trace);
        if (r.rouge) rouge.push_back(r.rouge->f1);
        row.taken += r.session.stats.taken;
        row.available += r.session.stats.available;
        row.reprioritizations += r.session.counters.reprioritizations;
        row.output_tokens += r.session.trace.output_tokens.size();
    }
    const auto timing = timing_summary(traces);
    row.ttft = timing.ttft;
    row.total_time = timing.total_time;
    if (!rouge.empty()) row.rouge_l_f1 = mean_stddev(rouge);
    return row;
}

// ---------------------------------------------------------------------------
// serialization

namespace {

nlohmann::json cost_json(const PrefillCost& c) {
    return {{"tokens", c.tokens}, {"matrix_elements", c.matrix}, {"causal_elements", c.causal}};
}

nlohmann::json mean_std_json(const MeanStd& m) { return {{"mean", m.mean}, {"stddev", m.stddev}}; }

}  // namespace

namespace {

// Where a report is written does not change what it says.
std::map<std::string, std::string> report_config(const RunConfig& config) {
    auto kv = config.to_key_values();
    kv.erase("output.dir");
    kv.erase("output.format");
    return kv;
}

}  // namespace

nlohmann::json run_report(const RunOutcome& run) {
    using nlohmann::json;
    const auto& s = run.session;

    json events = json::array();
    for (const auto& e : s.trace.events) {
        json ev = {{"time", e.time}, {"kind", to_string(e.kind)}, {"value", e.value}};
        if (!e.detail.empty()) ev["detail"] = e.detail;
        events.push_back(std::move(ev));
    }
    json history = json::array();
    for (const auto& h : s.selection_history) history.push_back({{"step", h.step}, {"selected", h.selected}});
    json initial = json::array();
    for (const auto& c : s.initial_scores) initial.push_back({{"chunk_index", c.chunk_index}, {"score", c.score}});
    json replacements = json::array();
    for (const auto& e : s.stats.events) {
        replacements.push_back({{"step", e.step},
                                {"evict", e.evict},
                                {"admit", e.admit},
                                {"recompute", e.recompute},
                                {"applied", e.applied}});
    }
    json buffer = json::array();
    for (const auto& b : s.final_buffer) {
        buffer.push_back({{"chunk_index", b.chunk_index},
                          {"score", b.score},
                          {"kv_resident", b.kv_resident},
                          {"kv_stale", b.kv_stale},
                          {"admitted_at", b.admitted_at}});
    }

    std::uint64_t step_total = 0, step_max = 0;
    for (auto e : s.counters.step_elements) {
        step_total += e;
        step_max = std::max(step_max, e);
    }

    json metrics = json::object();
    if (run.rouge) {
        metrics["rouge_l"] = {{"precision", run.rouge->precision}, {"recall", run.rouge->recall}, {"f1", run.rouge->f1}};
    }
    if (run.similarity) metrics["embedding_similarity"] = *run.similarity;

    return {
        {"schema_version", kReportSchemaVersion},
        {"report_kind", "run"},
        {"run_id", run.run_id},
        {"record_id", run.record_id},
        {"config", report_config(run.config)},
        {"document",
         {{"n_tokens", s.n_tokens}, {"n_chunks", s.n_chunks}, {"chunk_size", run.config.chunk_size},
          {"prompt_tokens", s.prompt_tokens},
          // FP16 chunk vectors: n * d * 2 bytes, kilobytes at this scale
          {"embedding_store_bytes", embedding_store_bytes(s.n_chunks, run.config.embedding_dim)}}},
        {"selection",
         {{"mode", to_string(s.mode)},
          {"k", s.k_effective},
          {"async_start_chunks", s.async_start},
          {"initial_scores", std::move(initial)},
          {"history", std::move(history)},
          {"final_buffer", std::move(buffer)}}},
        {"replacement",
         {{"taken", s.stats.taken},
          {"available", s.stats.available},
          {"reprioritizations", s.counters.reprioritizations},
          {"events", std::move(replacements)}}},
        {"trace",
         {{"ttft", s.trace.ttft}, {"total_time", s.trace.total_time}, {"events", std::move(events)}}},
        {"output", {{"tokens", s.trace.output_tokens}, {"text", run.output_text}}},
        {"counters",
         {{"prefill", cost_json(s.counters.prefill)},
          {"replacement", cost_json(s.counters.replacement)},
          {"decode_steps", s.counters.step_elements.size()},
          {"decode_elements_total", step_total},
          {"decode_elements_max", step_max}}},
        {"metrics", std::move(metrics)},
    };
}

nlohmann::json sweep_report(std::string_view kind, std::span<const SweepRow> rows, std::span<const RunOutcome> runs) {
    using nlohmann::json;
    json jrows = json::array();
    for (const auto& r : rows) {
        json row = {{"axis", r.axis},
                    {"value", r.value},
                    {"label", r.label},
                    {"mode", r.mode},
                    {"runs", r.runs},
                    {"ttft", mean_std_json(r.ttft)},
                    {"total_time", mean_std_json(r.total_time)},
                    {"taken", r.taken},
                    {"available", r.available},
                    {"reprioritizations", r.reprioritizations},
                    {"output_tokens", r.output_tokens}};
        row["rouge_l_f1"] = r.rouge_l_f1 ? mean_std_json(*r.rouge_l_f1) : json(nullptr);
        jrows.push_back(std::move(row));
    }
    json jruns = json::array();
    for (const auto& r : runs) jruns.push_back(run_report(r));
    return {{"schema_version", kReportSchemaVersion},
            {"report_kind", std::string(kind)},
            {"rows", std::move(jrows)},
            {"runs", std::move(jruns)}};
}

std::string run_csv_header() {
    return "run_id,record_id,mode,k,chunk_size,n_chunks,ttft,total_time,tokens,taken,available,rouge_l_f1\n";
}

namespace {

std::string csv_field(std::string_view s) {
    if (s.find(',') == std::string_view::npos && s.find('"') == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

}  // namespace

std::string run_csv_row(const RunOutcome& run) {
    const auto& s = run.session;
    return fmt::format("{},{},{},{},{},{},{:.6f},{:.6f},{},{},{},{}\n", csv_field(run.run_id), csv_field(run.record_id),
                       to_string(s.mode), s.k_effective, run.config.chunk_size, s.n_chunks, s.trace.ttft,
                       s.trace.total_time, s.trace.output_tokens.size(), s.stats.taken, s.stats.available,
                       run.rouge ? fmt::format("{:.6f}", run.rouge->f1) : std::string());
}

std::string run_text(const RunOutcome& run) {
    const auto& s = run.session;
    std::string out = fmt::format("run {} record {} mode {}\n", run.run_id, run.record_id, to_string(s.mode));
    out += fmt::format("  tokens {}  chunks {}  k {}  async start {}\n", s.n_tokens, s.n_chunks, s.k_effective,
                       s.async_start);
    out += fmt::format("  ttft {:.4f}  total {:.4f}  output tokens {}\n", s.trace.ttft, s.trace.total_time,
                       s.trace.output_tokens.size());
    out += fmt::format("  replacements taken {} / available {}  reprioritizations {}\n", s.stats.taken,
                       s.stats.available, s.counters.reprioritizations);
    out += fmt::format("  final selection {}\n", s.selection_history.back().selected);
    if (run.rouge) out += fmt::format("  rouge-l f1 {:.4f}\n", run.rouge->f1);
    out += fmt::format("  output: {}\n", run.output_text);
    return out;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
    std::string out =
        "axis,value,label,mode,runs,ttft_mean,ttft_std,total_mean,total_std,rouge_l_f1_mean,rouge_l_f1_std,taken,"
        "available,reprioritizations,output_tokens\n";
    for (const auto& r : rows) {
        const std::string rouge =
            r.rouge_l_f1 ? fmt::format("{:.6f},{:.6f}", r.rouge_l_f1->mean, r.rouge_l_f1->stddev) : std::string(",");
        out += fmt::format("{},{},{},{},{},{:.6f},{:.6f},{:.6f},{:.6f},{},{},{},{},{}\n", r.axis, csv_field(r.value),
                           csv_field(r.label), r.mode, r.runs, r.ttft.mean, r.ttft.stddev, r.total_time.mean,
                           r.total_time.stddev, rouge, r.taken, r.available, r.reprioritizations, r.output_tokens);
    }
    return out;
}

std::string sweep_text(std::span<const SweepRow> rows) {
    std::string out = fmt::format("{:<28} {:>5} {:>18} {:>18} {:>18} {:>6} {:>6}\n", "Method", "Runs", "TTFT (s)",
                                  "Total (s)", "ROUGE-L F1", "Taken", "Avail");
    for (const auto& r : rows) {
        out += fmt::format("{:<28} {:>5} {:>18} {:>18} {:>18} {:>6} {:>6}\n", r.label, r.runs,
                           format_mean_std(r.ttft), format_mean_std(r.total_time),
                           r.rouge_l_f1 ? format_mean_std(*r.rouge_l_f1) : std::string("-"), r.taken, r.available);
    }
    return out;
}

}  // namespace apce
