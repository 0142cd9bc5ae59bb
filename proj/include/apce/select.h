// Copyright (C) 2026 The APCE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "apce/embed.h"

namespace apce {

struct ChunkScore {
    ChunkIndex chunk_index = 0;
    double score = 0.0;
};

/// Ranking order used by selection: higher score first, smaller chunk index on ties.
inline bool ranks_before(const ChunkScore& a, const ChunkScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.chunk_index < b.chunk_index;
}

struct SelectionResult {
    std::vector<ChunkIndex> selected;  // document order
    std::vector<ChunkScore> scores;    // as passed in
    std::size_t k_effective = 0;
};

/// q.c / (|q| |c|), clamped to [-1, 1].
double cosine(const Embedding& q, const Embedding& c);

/// Scores the first `n_candidates` chunks of the store against the query.
std::vector<ChunkScore> score_chunks(const Embedding& query, const EmbeddingStore& store,
                                     std::size_t n_candidates);
inline std::vector<ChunkScore> score_chunks(const Embedding& query, const EmbeddingStore& store) {
    return score_chunks(query, store, store.size());
}

/// Picks the min(k, n) best-ranked chunks and returns them in document order.
SelectionResult select_top_k(std::vector<ChunkScore> scores, std::size_t k);

}  // namespace apce
