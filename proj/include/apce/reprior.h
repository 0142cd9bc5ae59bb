// Copyright (C) 2026 The APCE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "apce/embed.h"
#include "apce/kv_backend.h"
#include "apce/select.h"

namespace apce {

struct QueryBlendConfig {
    std::size_t tail_chars = 100;    // instruction characters kept
    std::size_t recent_tokens = 50;  // generated tokens kept
    double alpha = 0.5;              // weight of the instruction term
};

/**
 * Query embedding that mixes the instruction tail with the most recent output:
 * normalize(alpha * f(tail) + (1 - alpha) * f(recent)). Before any output exists
 * it is f(tail) exactly. Callers refresh it only at reprioritization boundaries.
 */
class EnhancedQuery {
public:
    EnhancedQuery(std::string instruction, QueryBlendConfig config, const EmbeddingProvider& provider,
                  const Tokenizer& tokenizer);

    const Embedding& current() const { return current_; }
    const std::string& instruction() const { return instruction_text_; }
    const Embedding& instruction_embedding() const { return instruction_; }
    const QueryBlendConfig& config() const { return config_; }

    const Embedding& update(std::span<const TokenId> generated);

private:
    std::string instruction_text_;
    QueryBlendConfig config_;
    const EmbeddingProvider* provider_;
    Embedding instruction_;
    Embedding current_;
};

struct BufferEntry {
    ChunkIndex chunk_index = 0;
    double score = 0.0;
    bool kv_resident = false;
    bool kv_stale = false;  // context changed and the block was not rebuilt
    std::size_t admitted_at = 0;
};

/// The chunks currently selected, at most `capacity` of them, kept in document order.
class ChunkBuffer {
public:
    explicit ChunkBuffer(std::size_t capacity);

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return entries_.size(); }
    const std::vector<BufferEntry>& entries() const { return entries_; }
    std::vector<ChunkIndex> indices() const;
    bool contains(ChunkIndex chunk) const;
    const BufferEntry* find(ChunkIndex chunk) const;

    std::size_t generation_step() const { return generation_step_; }
    void set_generation_step(std::size_t step) { generation_step_ = step; }

    /// Inserts a fresh entry; throws when full or already present.
    void insert(BufferEntry entry);
    void erase(ChunkIndex chunk);
    void set_score(ChunkIndex chunk, double score);
    void mark(ChunkIndex chunk, bool resident, bool stale);

private:
    BufferEntry* find_mut(ChunkIndex chunk) { return const_cast<BufferEntry*>(find(chunk)); }

    std::size_t capacity_;
    std::size_t generation_step_ = 0;
    std::vector<BufferEntry> entries_;
};

struct ReplacementPlan {
    std::vector<ChunkIndex> evict;      // ascending
    std::vector<ChunkIndex> admit;      // ascending
    std::vector<ChunkIndex> recompute;  // retained chunks whose causal context changed, ascending
    std::vector<ChunkScore> scores;     // fresh scores for every candidate chunk

    bool empty() const { return evict.empty() && admit.empty(); }
};

/**
 * Re-scores the first `n_candidates` chunks and plans the move from the current
 * buffer to their top-k. When the buffer starts full, |admit| = |evict|; otherwise
 * the extra admissions fill free capacity.
 *
 * A retained chunk is scheduled for recompute when any admitted or evicted chunk
 * precedes it in document order: under causal attention its K/V saw that chunk
 * (or did not), and no longer matches a fresh prefill of the new set.
 */
ReplacementPlan reprioritize(const ChunkBuffer& buffer, const EmbeddingStore& store, const Embedding& query,
                             std::size_t n_candidates);
inline ReplacementPlan reprioritize(const ChunkBuffer& buffer, const EmbeddingStore& store,
                                    const Embedding& query) {
    return reprioritize(buffer, store, query, store.size());
}

struct ApplyPolicy {
    bool recompute = true;
    // A plan is applied only if its admitted chunks beat the evicted ones by this
    // much in mean score. Zero applies every non-empty plan.
    double min_gain = 0.0;
};

struct ReplacementEvent {
    std::size_t step = 0;
    std::vector<ChunkIndex> evict;
    std::vector<ChunkIndex> admit;
    std::vector<ChunkIndex> recompute;
    bool applied = false;
};

struct ReplacementStats {
    std::size_t taken = 0;
    std::size_t available = 0;
    std::vector<ReplacementEvent> events;
};

/**
 * Applies `plan` to the buffer and the K/V backend. Empty plans are a no-op.
 * Otherwise `available` grows by one, and when the policy accepts the plan,
 * evictions happen first, then admitted and recomputed chunks are built in
 * document order and `taken` grows by one. Returns whether the plan was applied.
 */
bool apply_plan(ChunkBuffer& buffer, const ReplacementPlan& plan, KvBackend& kv, ReplacementStats& stats,
                const ApplyPolicy& policy = {});

/// True when step > 0 and step is a multiple of interval. Throws on interval 0.
bool reprioritization_due(std::size_t generation_step, std::size_t interval);

}  // namespace apce
