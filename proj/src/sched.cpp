// Copyright (C) 2026 The APCE Authors
// SPDX-License-Identifier: Apache-2.0

#include "apce/sched.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace apce {

std::string_view to_string(Mode mode) { return mode == Mode::dense ? "dense" : "apce"; }

Mode parse_mode(std::string_view text) {
    if (text == "dense") return Mode::dense;
    if (text == "apce") return Mode::apce;
    throw std::invalid_argument(fmt::format("unknown mode '{}' (expected dense or apce)", text));
}

std::string_view to_string(EventKind kind) {
    switch (kind) {
        case EventKind::chunk_loaded: return "chunk_loaded";
        case EventKind::prefill: return "prefill";
        case EventKind::token_emitted: return "token_emitted";
        case EventKind::reprioritization: return "reprioritization";
        case EventKind::recompute: return "recompute";
        case EventKind::warning: return "warning";
    }
    return "unknown";
}

void SessionConfig::validate() const {
    if (chunk_size == 0) throw std::invalid_argument("chunk_size must be at least 1");
    if (mode == Mode::apce && max_chunks == 0) throw std::invalid_argument("max_chunks must be at least 1");
    if (max_new_tokens == 0) throw std::invalid_argument("max_new_tokens must be at least 1");
    if (reprioritization.interval == 0) throw std::invalid_argument("reprioritization interval must be at least 1");
    if (load.async_start_chunks == 0) throw std::invalid_argument("async_start_chunks must be at least 1");
    if (!(load.per_chunk_load_latency >= 0.0) || !(load.prefill_token_latency >= 0.0) ||
        !(load.decode_latency >= 0.0)) {
        throw std::invalid_argument("latencies must be non-negative");
    }
}

namespace {

class Clock {
public:
    explicit Clock(std::vector<TraceEvent>& events) : events_(events) {}

    double now() const { return now_; }
    void advance(double dt) { now_ += dt; }
    void advance_to(double t) { now_ = std::max(now_, t); }

    void emit(EventKind kind, std::int64_t value, std::string detail = {}) { emit_at(now_, kind, value, std::move(detail)); }
    void emit_at(double t, EventKind kind, std::int64_t value, std::string detail = {}) {
        events_.push_back(TraceEvent{t, kind, value, std::move(detail)});
    }

private:
    std::vector<TraceEvent>& events_;
    double now_ = 0.0;
};

}  // namespace

SessionResult simulate_generation(const Model& model, const EmbeddingProvider& provider, const Tokenizer& tokenizer,
                                  std::span<const TokenId> document, std::string_view query,
                                  const SessionConfig& config, const EmbeddingStore* external) {
    const auto wall_start = std::chrono::steady_clock::now();
    config.validate();
    if (tokenizer.vocab_size() > model.config().vocab_size) {
        throw std::invalid_argument(fmt::format("tokenizer vocabulary {} exceeds model vocabulary {}",
                                                tokenizer.vocab_size(), model.config().vocab_size));
    }

    const auto chunks = chunk(document, config.chunk_size);
    if (chunks.empty()) throw std::invalid_argument("document is empty");
    const auto prompt = tokenizer.tokenize(query).tokens;
    if (prompt.empty()) throw std::invalid_argument("query has no tokens");

    EmbeddingStore store;
    if (external) {
        if (external->size() != chunks.size()) {
            throw std::invalid_argument(fmt::format("external embeddings cover {} chunks, document has {}",
                                                    external->size(), chunks.size()));
        }
        if (external->dim() != provider.dim()) {
            throw std::invalid_argument(fmt::format("external embeddings have dimension {}, query provider {}",
                                                    external->dim(), provider.dim()));
        }
        store = *external;
    } else {
        store = EmbeddingStore::build(provider, chunks);
    }

    SessionResult res;
    res.mode = config.mode;
    res.n_tokens = document.size();
    res.n_chunks = chunks.size();
    res.prompt_tokens = prompt.size();

    const std::size_t n = chunks.size();
    const double load_dt = config.load.per_chunk_load_latency;
    const double token_dt = config.load.prefill_token_latency;
    auto arrival = [&](std::size_t i) { return static_cast<double>(i + 1) * load_dt; };

    std::vector<TraceEvent> events;
    Clock clock(events);
    std::size_t arrived = 0;  // chunk_loaded events recorded so far
    auto record_arrivals_until = [&](double t) {
        while (arrived < n && arrival(arrived) <= t) {
            clock.emit_at(arrival(arrived), EventKind::chunk_loaded, static_cast<std::int64_t>(arrived));
            ++arrived;
        }
    };

    EnhancedQuery equery(std::string(query), config.query, provider, tokenizer);
    KvCache cache = model.make_cache();
    const bool apce = config.mode == Mode::apce;
    ChunkBuffer buffer(apce ? std::min(config.max_chunks, n) : n);
    res.k_effective = buffer.capacity();

    if (!apce) {
        res.async_start = n;
        clock.advance_to(arrival(n - 1));
        record_arrivals_until(clock.now());
        res.counters.prefill = model.prefill_dense(cache, chunks);
        clock.advance(static_cast<double>(document.size()) * token_dt);
        clock.emit(EventKind::prefill, static_cast<std::int64_t>(document.size()));
        for (const auto& c : chunks) buffer.insert(BufferEntry{c.index, 1.0, true, false, 0});
    } else {
        std::size_t start = config.load.async_start_chunks;
        if (start > n) {
            clock.emit(EventKind::warning, static_cast<std::int64_t>(start),
                       fmt::format("async_start_chunks {} clamped to {} chunks", start, n));
            start = n;
        }
        res.async_start = start;
        clock.advance_to(arrival(start - 1));
        record_arrivals_until(clock.now());
        arrived = std::max(arrived, start);

        res.initial_scores = score_chunks(equery.current(), store, start);
        const auto selection = select_top_k(res.initial_scores, buffer.capacity());
        std::vector<Chunk> selected;
        for (ChunkIndex i : selection.selected) selected.push_back(chunks[i]);
        res.counters.prefill = model.prefill(cache, selected);
        for (ChunkIndex i : selection.selected) {
            buffer.insert(BufferEntry{i, res.initial_scores[i].score, true, false, 0});
        }
        clock.advance(static_cast<double>(res.counters.prefill.tokens) * token_dt);
        clock.emit(EventKind::prefill, static_cast<std::int64_t>(res.counters.prefill.tokens),
                   fmt::format("chunks {}", selection.selected));
    }
    res.selection_history.push_back({0, buffer.indices()});

    std::size_t position = document.size();
    StepOutput out;
    for (TokenId t : prompt) {
        out = model.decode_step(cache, t, position++);
        res.counters.step_elements.push_back(out.score_elements);
    }
    clock.advance(static_cast<double>(prompt.size()) * token_dt);

    auto choose = [&](std::size_t g, const StepOutput& step) {
        return g <= config.forced_tokens.size() ? config.forced_tokens[g - 1] : step.token;
    };

    const ApplyPolicy policy{config.reprioritization.recompute, config.reprioritization.min_gain};
    const bool reprioritize_on = apce && config.reprioritization.enabled;
    std::vector<TokenId>& generated = res.trace.output_tokens;
    TokenId token = choose(1, out);

    for (std::size_t g = 1; g <= config.max_new_tokens; ++g) {
        generated.push_back(token);
        if (g == 1) res.trace.ttft = clock.now();
        clock.emit(EventKind::token_emitted, token);
        buffer.set_generation_step(g);

        if (reprioritize_on && reprioritization_due(g, config.reprioritization.interval)) {
            ++res.counters.reprioritizations;
            record_arrivals_until(clock.now());
            const auto& q = equery.update(generated);
            const auto plan = reprioritize(buffer, store, q, arrived);
            ModelKvBackend backend(model, cache, chunks);
            const bool applied = apply_plan(buffer, plan, backend, res.stats, policy);
            clock.emit(EventKind::reprioritization, static_cast<std::int64_t>(g),
                       plan.empty() ? std::string("no change")
                                    : fmt::format("evict {} admit {}{}", plan.evict, plan.admit,
                                                  applied ? "" : " (declined)"));
            if (applied) {
                res.counters.replacement += backend.cost();
                clock.advance(static_cast<double>(backend.cost().tokens) * token_dt);
                if (policy.recompute && !plan.recompute.empty()) {
                    clock.emit(EventKind::recompute, static_cast<std::int64_t>(backend.cost().tokens),
                               fmt::format("chunks {}", plan.recompute));
                }
                res.selection_history.push_back({g, buffer.indices()});
            }
        }

        if (g < config.max_new_tokens) {
            out = model.decode_step(cache, token, position++);
            res.counters.step_elements.push_back(out.score_elements);
            clock.advance(config.load.decode_latency);
            token = choose(g + 1, out);
        }
    }
    // loading stops once generation is done
    record_arrivals_until(clock.now());

    std::stable_sort(events.begin(), events.end(),
                     [](const TraceEvent& a, const TraceEvent& b) { return a.time < b.time; });
    res.trace.events = std::move(events);
    res.trace.total_time = res.trace.events.back().time;
    res.final_buffer = buffer.entries();
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    return res;
}

TimingSummary timing_summary(std::span<const GenerationTrace> traces) {
    if (traces.empty()) throw std::invalid_argument("timing summary of no traces");
    std::vector<double> ttft, total;
    for (const auto& t : traces) {
        ttft.push_back(t.ttft);
        total.push_back(t.total_time);
    }
    TimingSummary s;
    s.ttft = mean_stddev(ttft);
    s.total_time = mean_stddev(total);
    s.ttft_text = format_mean_std(s.ttft);
    s.total_text = format_mean_std(s.total_time);
    return s;
}

}  // namespace apce
