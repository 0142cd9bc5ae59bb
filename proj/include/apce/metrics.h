// Copyright (C) 2026 The APCE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "apce/embed.h"

namespace apce {

struct RougeLScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Longest common subsequence length, O(|a| |b|) time and O(|b|) memory.
template <typename T>
std::size_t lcs_length(std::span<const T> a, std::span<const T> b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = (a[i - 1] == b[j - 1]) ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

template <typename T>
RougeLScore rouge_l(std::span<const T> candidate, std::span<const T> reference) {
    if (candidate.empty() || reference.empty()) return {};
    const double lcs = static_cast<double>(lcs_length(candidate, reference));
    RougeLScore s;
    s.precision = lcs / static_cast<double>(candidate.size());
    s.recall = lcs / static_cast<double>(reference.size());
    s.f1 = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

/// Lowercased words for scoring: ASCII letters and digits (plus any non-ASCII bytes)
/// form words, everything else separates them.
std::vector<std::string> scoring_tokens(std::string_view text);

RougeLScore rouge_l_f1(std::string_view candidate, std::string_view reference);

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0;
};

enum class Deviation { population, sample };

/// Throws std::invalid_argument on an empty list (or fewer than two values for a sample deviation).
MeanStd mean_stddev(std::span<const double> values, Deviation kind = Deviation::population);

/// "mean±stddev" with four decimals.
std::string format_mean_std(const MeanStd& m);
std::string score_summary(std::span<const double> values, Deviation kind = Deviation::population);

/// Cosine between embeddings of the two texts. A similarity proxy only; it is not BERTScore.
double embedding_similarity(const EmbeddingProvider& provider, const Tokenizer& tokenizer, std::string_view candidate,
                            std::string_view reference);

}  // namespace apce
