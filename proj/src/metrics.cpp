// Copyright (C) 2026 The APCE Authors
// SPDX-License-Identifier: Apache-2.0

#include "apce/metrics.h"

#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "apce/select.h"

namespace apce {

std::vector<std::string> scoring_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        const bool word = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
        if (word) {
            cur.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch);
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

RougeLScore rouge_l_f1(std::string_view candidate, std::string_view reference) {
    const auto c = scoring_tokens(candidate);
    const auto r = scoring_tokens(reference);
    return rouge_l(std::span<const std::string>(c), std::span<const std::string>(r));
}

MeanStd mean_stddev(std::span<const double> values, Deviation kind) {
    if (values.empty()) throw std::invalid_argument("mean/stddev of an empty list");
    if (kind == Deviation::sample && values.size() < 2) {
        throw std::invalid_argument("sample stddev needs at least two values");
    }
    double sum = 0.0;
    for (double v : values) sum += v;
    const double mean = sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double denom = static_cast<double>(kind == Deviation::sample ? values.size() - 1 : values.size());
    return {mean, std::sqrt(ss / denom)};
}

std::string format_mean_std(const MeanStd& m) {
    // "-0.0000" would look odd in aggregate tables
    auto clean = [](double x) { return std::fabs(x) < 5e-5 ? 0.0 : x; };
    return fmt::format("{:.4f}±{:.4f}", clean(m.mean), clean(m.stddev));
}

std::string score_summary(std::span<const double> values, Deviation kind) {
    return format_mean_std(mean_stddev(values, kind));
}

double embedding_similarity(const EmbeddingProvider& provider, const Tokenizer& tokenizer, std::string_view candidate,
                            std::string_view reference) {
    return cosine(embed_query_text(provider, tokenizer, candidate), embed_query_text(provider, tokenizer, reference));
}

}  // namespace apce
