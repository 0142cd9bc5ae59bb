// Copyright (C) 2026 The APCE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "apce/embed.h"
#include "apce/metrics.h"
#include "apce/model.h"
#include "apce/reprior.h"

namespace apce {

enum class Mode { dense, apce };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view text);  // throws std::invalid_argument

/// Virtual-clock costs. Chunk i (0-based) finishes loading at (i + 1) * per_chunk_load_latency.
struct LoadModel {
    double per_chunk_load_latency = 0.0;
    double prefill_token_latency = 0.0;  // per token prefilled, admitted or recomputed
    double decode_latency = 0.0;         // per decode step after the first token
    std::size_t async_start_chunks = 4;  // apce starts once this many chunks have arrived
};

struct ReprioritizationConfig {
    bool enabled = true;
    std::size_t interval = 50;
    bool recompute = true;
    double min_gain = 0.0;
};

struct SessionConfig {
    Mode mode = Mode::apce;
    std::size_t chunk_size = 800;
    std::size_t max_chunks = 1;  // k
    ReprioritizationConfig reprioritization;
    QueryBlendConfig query;
    LoadModel load;
    std::size_t max_new_tokens = 64;
    // Teacher forcing: when non-empty, output token g is forced_tokens[g - 1]
    // while g <= forced_tokens.size(), instead of the greedy choice.
    std::vector<TokenId> forced_tokens;

    void validate() const;  // throws std::invalid_argument
};

enum class EventKind { chunk_loaded, prefill, token_emitted, reprioritization, recompute, warning };

std::string_view to_string(EventKind kind);

struct TraceEvent {
    double time = 0.0;
    EventKind kind = EventKind::chunk_loaded;
    // chunk index (chunk_loaded), token id (token_emitted), generation step
    // (reprioritization) or token count (prefill, recompute); -1 when unused
    std::int64_t value = -1;
    std::string detail;
};

struct GenerationTrace {
    std::vector<TraceEvent> events;  // sorted by time, ties in causal order
    double ttft = 0.0;
    double total_time = 0.0;
    std::vector<TokenId> output_tokens;
};

struct SelectionSnapshot {
    std::size_t step = 0;
    std::vector<ChunkIndex> selected;
};

struct SessionCounters {
    PrefillCost prefill;       // initial prefill
    PrefillCost replacement;   // admissions and recomputes during decoding
    std::vector<std::uint64_t> step_elements;  // per decode step, prompt tokens included
    std::size_t reprioritizations = 0;
};

struct SessionResult {
    Mode mode = Mode::apce;
    std::size_t n_tokens = 0;
    std::size_t n_chunks = 0;
    std::size_t k_effective = 0;
    std::size_t async_start = 0;
    std::size_t prompt_tokens = 0;
    GenerationTrace trace;
    ReplacementStats stats;
    std::vector<SelectionSnapshot> selection_history;
    std::vector<ChunkScore> initial_scores;
    std::vector<BufferEntry> final_buffer;
    SessionCounters counters;
    double wall_seconds = 0.0;  // profiling only
};

/**
 * Runs one generation session on a virtual clock.
 *
 * Dense mode waits for every chunk, prefills the whole document in one pass and
 * decodes over all of it. Apce mode starts once `async_start_chunks` chunks have
 * arrived, prefills the top-k among them, and at every reprioritization boundary
 * re-selects among the chunks that have arrived by then.
 *
 * The instruction is fed as prompt tokens at positions N, N+1, ... after the
 * document; generated tokens follow it. The first token is emitted once the
 * prompt has been processed.
 *
 * `external` replaces the provider for chunk embeddings; the query is always
 * embedded with `provider`.
 */
SessionResult simulate_generation(const Model& model, const EmbeddingProvider& provider, const Tokenizer& tokenizer,
                                  std::span<const TokenId> document, std::string_view query,
                                  const SessionConfig& config, const EmbeddingStore* external = nullptr);

struct TimingSummary {
    MeanStd ttft;
    MeanStd total_time;
    std::string ttft_text;   // "mean±std", 4 decimals
    std::string total_text;
};

TimingSummary timing_summary(std::span<const GenerationTrace> traces);

}  // namespace apce
