// Copyright (C) 2026 The APCE Authors
// SPDX-License-Identifier: Apache-2.0

#include "apce/embed.h"

#include <cmath>
#include <fstream>
#include <regex>
#include <stdexcept>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace apce {

namespace {
constexpr std::uint64_t kSignSalt = 0x5bd1e9955bd1e995ULL;
// Python's json module writes these bare literals, which strict JSON rejects.
const std::regex kNonFiniteLiteral(R"((^|[\[,\s])-?(NaN|Infinity)([\],\s]|$))");
}  // namespace

double Embedding::norm() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
}

Embedding normalized(std::vector<double> values) {
    double s = 0.0;
    for (double v : values) {
        if (!std::isfinite(v)) throw std::invalid_argument("embedding has a non-finite entry");
        s += v * v;
    }
    if (s == 0.0) throw std::invalid_argument("embedding has zero norm");
    const double inv = 1.0 / std::sqrt(s);
    for (double& v : values) v *= inv;
    return Embedding{std::move(values)};
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

HashingEmbedder::HashingEmbedder(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw std::invalid_argument("embedding dimension must be at least 1");
}

std::size_t HashingEmbedder::bucket(TokenId id) const { return splitmix64(id) % dim_; }

double HashingEmbedder::sign(TokenId id) {
    return (splitmix64(static_cast<std::uint64_t>(id) ^ kSignSalt) >> 63) ? -1.0 : 1.0;
}

Embedding HashingEmbedder::embed(std::span<const TokenId> tokens) const {
    if (tokens.empty()) throw std::invalid_argument("cannot embed an empty token sequence");
    std::vector<double> acc(dim_, 0.0);
    for (TokenId id : tokens) acc[bucket(id)] += sign(id);
    return normalized(std::move(acc));
}

Embedding embed_chunk(const EmbeddingProvider& provider, const Chunk& chunk) {
    if (chunk.tokens.empty()) throw std::invalid_argument(fmt::format("chunk {} is empty", chunk.index));
    return provider.embed(chunk.tokens);
}

Embedding embed_query_text(const EmbeddingProvider& provider, const Tokenizer& tokenizer,
                           std::string_view text) {
    auto seq = tokenizer.tokenize(text);
    if (seq.empty()) throw std::invalid_argument("query text has no tokens");
    return provider.embed(seq.tokens);
}

EmbeddingStore::EmbeddingStore(std::size_t dim, std::vector<Embedding> chunk_embeddings)
    : dim_(dim), chunks_(std::move(chunk_embeddings)) {
    for (std::size_t i = 0; i < chunks_.size(); ++i) {
        if (chunks_[i].dim() != dim_) {
            throw std::invalid_argument(
                fmt::format("chunk {} embedding has dimension {}, expected {}", i, chunks_[i].dim(), dim_));
        }
    }
}

EmbeddingStore EmbeddingStore::build(const EmbeddingProvider& provider, std::span<const Chunk> chunks) {
    std::vector<Embedding> out;
    out.reserve(chunks.size());
    for (const auto& c : chunks) out.push_back(embed_chunk(provider, c));
    return EmbeddingStore(provider.dim(), std::move(out));
}

EmbeddingStore ExternalEmbeddings::to_store(std::size_t n_chunks) const {
    if (vectors.size() != n_chunks || (n_chunks > 0 && vectors.rbegin()->first != n_chunks - 1)) {
        throw std::invalid_argument(fmt::format(
            "external embeddings cover {} chunks but the document has {}", vectors.size(), n_chunks));
    }
    std::vector<Embedding> out;
    out.reserve(n_chunks);
    for (const auto& [idx, e] : vectors) out.push_back(e);
    return EmbeddingStore(dim, std::move(out));
}

ExternalEmbeddings load_external_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot open embedding file '{}'", path.string()));

    const auto where = [&](std::size_t line) { return fmt::format("{}:{}", path.string(), line); };
    ExternalEmbeddings out;
    std::size_t dim_line = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            if (std::regex_search(line, kNonFiniteLiteral)) {
                throw ParseError(fmt::format("{}: non-finite entry in vector", where(line_no)));
            }
            throw ParseError(fmt::format("{}: invalid JSON: {}", where(line_no), e.what()));
        }
        if (!j.contains("chunk_index") || !j["chunk_index"].is_number_unsigned()) {
            throw ParseError(fmt::format("{}: \"chunk_index\" must be a non-negative integer", where(line_no)));
        }
        if (!j.contains("vector") || !j["vector"].is_array() || j["vector"].empty()) {
            throw ParseError(fmt::format("{}: \"vector\" must be a non-empty array", where(line_no)));
        }
        const auto idx = j["chunk_index"].get<ChunkIndex>();
        const auto& arr = j["vector"];
        std::vector<double> values;
        values.reserve(arr.size());
        for (const auto& x : arr) {
            if (x.is_string() && std::regex_match(x.get<std::string>(), std::regex("[+-]?(nan|NaN|inf|Inf|Infinity)"))) {
                throw ParseError(fmt::format("{}: non-finite entry \"{}\" in vector", where(line_no),
                                             x.get<std::string>()));
            }
            if (!x.is_number()) throw ParseError(fmt::format("{}: vector entries must be numbers", where(line_no)));
            const double v = x.get<double>();
            if (!std::isfinite(v)) throw ParseError(fmt::format("{}: non-finite entry in vector", where(line_no)));
            values.push_back(v);
        }
        if (out.dim == 0) {
            out.dim = values.size();
            dim_line = line_no;
        } else if (values.size() != out.dim) {
            throw ParseError(fmt::format("{}: dimension mismatch: vector has {} entries, line {} has {}",
                                         where(line_no), values.size(), dim_line, out.dim));
        }
        if (out.vectors.contains(idx)) {
            throw ParseError(fmt::format("{}: duplicate chunk_index {}", where(line_no), idx));
        }
        try {
            out.vectors.emplace(idx, normalized(std::move(values)));
        } catch (const std::invalid_argument& e) {
            throw ParseError(fmt::format("{}: {}", where(line_no), e.what()));
        }
    }
    return out;
}

}  // namespace apce
