// Copyright (C) 2026 The APCE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <stdexcept>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "apce/config.h"
#include "apce/embed.h"
#include "apce/metrics.h"
#include "apce/model.h"
#include "apce/sched.h"
#include "apce/textpipe.h"

namespace apce {

/// A named input file is missing or unreadable. The CLI maps it to exit code 3.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunOutcome {
    std::string run_id;
    std::string record_id;
    RunConfig config;
    SessionResult session;
    std::string output_text;
    std::optional<RougeLScore> rouge;       // when the record has a reference
    std::optional<double> similarity;       // hashed-embedding cosine to the reference
};

/// Shared state for a batch of runs over one configuration's model and embedder.
class Runner {
public:
    explicit Runner(const RunConfig& config);

    const Model& model() const { return model_; }
    const Tokenizer& tokenizer() const { return tokenizer_; }
    const EmbeddingProvider& provider() const { return provider_; }

    /// `config` may differ from the constructor's in session keys only
    /// (mode, chunking, selection, reprioritization, load, query, generation length).
    RunOutcome run(const RunConfig& config, const CorpusRecord& record, std::string run_id) const;
    RunOutcome run(const CorpusRecord& record, std::string run_id) const { return run(config_, record, std::move(run_id)); }

private:
    RunConfig config_;
    Model model_;
    Tokenizer tokenizer_;
    HashingEmbedder provider_;
    std::optional<ExternalEmbeddings> external_;
};

/// Loads the corpus named by `config.input`: `.jsonl` files are corpora, anything
/// else is a plain-text document that needs `config.input_query`.
std::vector<CorpusRecord> load_inputs(const RunConfig& config);

enum class SweepAxis { n_chunks, chunk_size, reprioritization_interval };

SweepAxis parse_sweep_axis(std::string_view text);  // throws ConfigError
std::string_view to_string(SweepAxis axis);

/// Applies one sweep value to a copy of `base`. For n_chunks, a value containing
/// '.' is a fraction, otherwise an explicit k.
RunConfig apply_sweep_value(const RunConfig& base, SweepAxis axis, std::string_view value);

std::string sweep_label(const RunConfig& config, SweepAxis axis, std::string_view value);

struct SweepRow {
    std::string axis;
    std::string value;
    std::string label;
    std::string mode;
    std::size_t runs = 0;
    MeanStd ttft;
    MeanStd total_time;
    std::optional<MeanStd> rouge_l_f1;
    std::size_t taken = 0;
    std::size_t available = 0;
    std::size_t reprioritizations = 0;
    std::size_t output_tokens = 0;
};

SweepRow aggregate(std::string axis, std::string value, std::string label, std::span<const RunOutcome> runs);

// Serialization. JSON reports carry schema_version and report_kind and hold no
// wall-clock data, so equal inputs give byte-identical reports.
inline constexpr int kReportSchemaVersion = 1;

nlohmann::json run_report(const RunOutcome& run);
nlohmann::json sweep_report(std::string_view kind, std::span<const SweepRow> rows, std::span<const RunOutcome> runs);

std::string run_csv_header();
std::string run_csv_row(const RunOutcome& run);
std::string run_text(const RunOutcome& run);

std::string sweep_csv(std::span<const SweepRow> rows);
std::string sweep_text(std::span<const SweepRow> rows);

}  // namespace apce
