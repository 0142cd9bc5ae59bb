// Copyright (C) 2026 The APCE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "apce/textpipe.h"

namespace apce {

inline constexpr std::size_t kDefaultEmbeddingDim = 384;

struct Embedding {
    std::vector<double> values;

    std::size_t dim() const { return values.size(); }
    double norm() const;
};

/// Returns v / ||v||. Throws std::invalid_argument on a zero or non-finite vector.
Embedding normalized(std::vector<double> values);

/// Maps a token sequence to a unit-norm embedding of fixed dimension.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::size_t dim() const = 0;
    virtual Embedding embed(std::span<const TokenId> tokens) const = 0;
};

/**
 * Signed feature hashing over token ids: every id adds +1 or -1 to one bucket,
 * then the vector is L2-normalized. Accumulation runs serially in token order.
 *
 * Bag-of-tokens model, so permuting tokens inside a chunk does not change the
 * result. Two distinct ids landing in one bucket with opposite signs can cancel;
 * a chunk whose buckets all cancel is rejected like an empty one.
 */
class HashingEmbedder final : public EmbeddingProvider {
public:
    explicit HashingEmbedder(std::size_t dim = kDefaultEmbeddingDim);

    std::size_t dim() const override { return dim_; }
    Embedding embed(std::span<const TokenId> tokens) const override;

    std::size_t bucket(TokenId id) const;
    static double sign(TokenId id);

private:
    std::size_t dim_;
};

std::uint64_t splitmix64(std::uint64_t x);

Embedding embed_chunk(const EmbeddingProvider& provider, const Chunk& chunk);
Embedding embed_query_text(const EmbeddingProvider& provider, const Tokenizer& tokenizer,
                           std::string_view text);

/// Chunk embeddings computed once at prefill; read-only afterwards.
class EmbeddingStore {
public:
    EmbeddingStore() = default;
    EmbeddingStore(std::size_t dim, std::vector<Embedding> chunk_embeddings);

    static EmbeddingStore build(const EmbeddingProvider& provider, std::span<const Chunk> chunks);

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return chunks_.size(); }
    const Embedding& chunk(ChunkIndex i) const { return chunks_.at(i); }
    std::span<const Embedding> chunks() const { return chunks_; }

private:
    std::size_t dim_ = 0;
    std::vector<Embedding> chunks_;
};

/// Precomputed chunk vectors read from a JSON-lines file of {"chunk_index", "vector"}.
struct ExternalEmbeddings {
    std::size_t dim = 0;
    std::map<ChunkIndex, Embedding> vectors;

    /// Requires indices 0..n_chunks-1 to be present exactly.
    EmbeddingStore to_store(std::size_t n_chunks) const;
};

ExternalEmbeddings load_external_embeddings(const std::filesystem::path& path);

inline std::uint64_t embedding_store_bytes(std::uint64_t n_chunks, std::uint64_t dim,
                                           std::uint64_t bytes_per_element = 2) {
    return n_chunks * dim * bytes_per_element;
}

}  // namespace apce
