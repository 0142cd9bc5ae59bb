// Copyright (C) 2026 The APCE Authors
// SPDX-License-Identifier: Apache-2.0

#include "apce/select.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace apce {

double cosine(const Embedding& q, const Embedding& c) {
    if (q.dim() != c.dim()) {
        throw std::invalid_argument(fmt::format("cosine of vectors with dimensions {} and {}", q.dim(), c.dim()));
    }
    double dot = 0.0, qq = 0.0, cc = 0.0;
    for (std::size_t i = 0; i < q.dim(); ++i) {
        dot += q.values[i] * c.values[i];
        qq += q.values[i] * q.values[i];
        cc += c.values[i] * c.values[i];
    }
    if (qq == 0.0 || cc == 0.0) throw std::invalid_argument("cosine of a zero-norm vector");
    const double s = dot / (std::sqrt(qq) * std::sqrt(cc));
    if (!std::isfinite(s)) throw std::invalid_argument("cosine is not finite");
    return std::clamp(s, -1.0, 1.0);
}

std::vector<ChunkScore> score_chunks(const Embedding& query, const EmbeddingStore& store,
                                     std::size_t n_candidates) {
    n_candidates = std::min(n_candidates, store.size());
    std::vector<ChunkScore> scores;
    scores.reserve(n_candidates);
    for (ChunkIndex i = 0; i < n_candidates; ++i) scores.push_back({i, cosine(query, store.chunk(i))});
    return scores;
}

SelectionResult select_top_k(std::vector<ChunkScore> scores, std::size_t k) {
    if (k == 0) throw std::invalid_argument("top-k selection needs k >= 1");
    if (scores.empty()) throw std::invalid_argument("top-k selection over an empty score list");

    SelectionResult result;
    result.k_effective = std::min(k, scores.size());

    std::vector<ChunkScore> ranked = scores;
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(result.k_effective),
                      ranked.end(), ranks_before);
    result.selected.reserve(result.k_effective);
    for (std::size_t i = 0; i < result.k_effective; ++i) result.selected.push_back(ranked[i].chunk_index);
    std::sort(result.selected.begin(), result.selected.end());
    result.scores = std::move(scores);
    return result;
}

}  // namespace apce
