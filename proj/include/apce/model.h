// Copyright (C) 2026 The APCE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "apce/kv_backend.h"
#include "apce/textpipe.h"

namespace apce {

struct ModelConfig {
    std::size_t n_layers = 4;
    std::size_t n_heads = 4;
    std::size_t d_model = 128;
    std::size_t d_head = 32;
    std::size_t d_kv_total = 64;  // K (or V) width summed over kv heads
    std::size_t d_ff = 256;
    std::uint32_t vocab_size = 32768;
    double rope_theta = 10000.0;
    std::uint64_t init_seed = 0;
    std::size_t max_position = std::size_t{1} << 16;

    std::size_t n_kv_heads() const { return d_kv_total / d_head; }
    void validate() const;  // throws std::invalid_argument

    bool operator==(const ModelConfig&) const = default;
};

/// K/V rows for a contiguous run of positions; row stride is d_kv_total.
struct KvBlock {
    std::size_t pos_begin = 0;
    std::size_t length = 0;
    std::vector<float> k;
    std::vector<float> v;

    bool operator==(const KvBlock&) const = default;
};

/**
 * Per-layer K/V keyed by chunk index, plus one append-only block holding the
 * prompt and generated tokens. Chunk blocks keep document-absolute positions.
 */
class KvCache {
public:
    KvCache(std::size_t n_layers, std::size_t d_kv) : n_layers_(n_layers), d_kv_(d_kv), generation_(n_layers) {}

    std::size_t n_layers() const { return n_layers_; }
    bool contains(ChunkIndex chunk) const { return chunks_.contains(chunk); }
    bool empty() const { return chunks_.empty() && generated_tokens() == 0; }
    std::vector<ChunkIndex> resident_chunks() const;
    std::size_t resident_tokens() const;
    std::size_t generated_tokens() const { return generation_.front().length; }

    const KvBlock& block(std::size_t layer, ChunkIndex chunk) const { return chunks_.at(chunk).at(layer); }
    const std::vector<KvBlock>& chunk_layers(ChunkIndex chunk) const { return chunks_.at(chunk); }
    const KvBlock& generation_block(std::size_t layer) const { return generation_.at(layer); }

    void evict(ChunkIndex chunk);

private:
    friend class Model;

    std::size_t n_layers_;
    std::size_t d_kv_;
    std::map<ChunkIndex, std::vector<KvBlock>> chunks_;
    std::vector<KvBlock> generation_;
};

/**
 * Attention-score elements, counted once per query row (not per head or layer).
 * `matrix` is the size of the score map a prefill call materializes: rows for the new
 * tokens times the resident context length, masked entries included. `causal` counts the
 * dot products actually evaluated.
 */
struct PrefillCost {
    std::uint64_t tokens = 0;
    std::uint64_t matrix = 0;
    std::uint64_t causal = 0;

    PrefillCost& operator+=(const PrefillCost& o) {
        tokens += o.tokens;
        matrix += o.matrix;
        causal += o.causal;
        return *this;
    }
};

struct StepOutput {
    std::vector<float> logits;
    TokenId token = 0;                 // greedy argmax, smallest id on ties
    std::uint64_t score_elements = 0;  // keys attended by this step's query
};

struct AttentionCost {
    std::uint64_t dense = 0;
    std::uint64_t sparse = 0;
    double ratio = 0.0;
};

/// Score-map sizes for N dense tokens against k chunks of m tokens: N^2, (km)^2, (km/N)^2.
AttentionCost attention_cost(std::uint64_t n_dense, std::uint64_t k, std::uint64_t m);

/**
 * Small decoder-only transformer: RMSNorm, grouped-query attention with rotary
 * positions, SiLU-gated MLP, tied output embedding. Weights come from init_seed.
 *
 * Every token is computed on its own with serial reductions, and attention walks
 * its keys in document order, so results are independent of how a sequence is
 * split into chunks.
 */
class Model {
public:
    explicit Model(ModelConfig config);

    const ModelConfig& config() const { return cfg_; }
    KvCache make_cache() const { return KvCache(cfg_.n_layers, cfg_.d_kv_total); }

    /// Adds `chunks` (ascending, none resident) in document order.
    PrefillCost prefill(KvCache& cache, std::span<const Chunk> chunks) const;

    /// One pass over the concatenated chunks (which must tile [0, N)), then split
    /// into per-chunk blocks. Used as the dense baseline.
    PrefillCost prefill_dense(KvCache& cache, std::span<const Chunk> chunks) const;

    /// Rebuilds resident chunks against the current resident set. `doc_chunks` is
    /// indexed by chunk index.
    PrefillCost recompute_kv(KvCache& cache, std::span<const ChunkIndex> chunk_indices,
                             std::span<const Chunk> doc_chunks) const;

    /// Feeds one prompt or generated token at `position` and appends its K/V.
    StepOutput decode_step(KvCache& cache, TokenId token, std::size_t position) const;

    /// Per-layer K/V of a full sequence from position 0, no cache.
    std::vector<KvBlock> forward_kv(std::span<const TokenId> tokens) const;

    /// Logits at every position of a full sequence from position 0 (row-major, N x vocab).
    std::vector<float> forward_logits(std::span<const TokenId> tokens) const;

    void save(const std::filesystem::path& path) const;
    static Model load(const std::filesystem::path& path);

    bool operator==(const Model&) const = default;

private:
    struct Layer {
        std::vector<float> attn_norm, wq, wk, wv, wo;
        std::vector<float> mlp_norm, w_gate, w_up, w_down;
        bool operator==(const Layer&) const = default;
    };
    struct Segment {
        const float* k;
        const float* v;
        std::size_t len;
    };
    struct BlockRun {
        std::vector<KvBlock> layers;
        std::vector<float> hidden;  // final hidden states, len x d_model
        std::uint64_t causal = 0;
    };

    template <typename Self, typename Fn>
    static void visit_tensors(Self& self, Fn&& fn);

    BlockRun run_block(std::span<const TokenId> tokens, std::size_t pos_begin,
                       const std::vector<std::vector<Segment>>& context) const;
    std::vector<std::vector<Segment>> chunk_context(const KvCache& cache, ChunkIndex before) const;
    PrefillCost build_chunk(KvCache& cache, const Chunk& chunk) const;
    std::vector<float> logits_for(std::span<const float> hidden) const;
    void check_positions(std::size_t begin, std::size_t len) const;

    ModelConfig cfg_;
    std::vector<double> inv_freq_;
    std::vector<float> embedding_;  // vocab x d_model, also the output head
    std::vector<float> final_norm_;
    std::vector<Layer> layers_;
};

/// KvBackend over a model, its cache and the document's chunks.
class ModelKvBackend final : public KvBackend {
public:
    ModelKvBackend(const Model& model, KvCache& cache, std::span<const Chunk> doc_chunks)
        : model_(&model), cache_(&cache), doc_chunks_(doc_chunks) {}

    void evict(ChunkIndex chunk) override;
    void load(std::span<const ChunkIndex> chunks) override;

    const PrefillCost& cost() const { return cost_; }

private:
    const Model* model_;
    KvCache* cache_;
    std::span<const Chunk> doc_chunks_;
    PrefillCost cost_;
};

}  // namespace apce
