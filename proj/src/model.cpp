// Copyright (C) 2026 The APCE Authors
// SPDX-License-Identifier: Apache-2.0

#include "apce/model.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace apce {

namespace {

constexpr float kNormEps = 1e-5f;

void rmsnorm(const float* x, const float* w, float* out, std::size_t n) {
    float ss = 0.0f;
    for (std::size_t i = 0; i < n; ++i) ss += x[i] * x[i];
    const float inv = 1.0f / std::sqrt(ss / static_cast<float>(n) + kNormEps);
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * inv * w[i];
}

// y[rows] = W[rows x cols] * x[cols]
void matvec(const std::vector<float>& w, const float* x, float* y, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const float* row = w.data() + r * cols;
        float acc = 0.0f;
        for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
}

void rotate(float* v, std::size_t d_head, std::size_t pos, const std::vector<double>& inv_freq) {
    for (std::size_t i = 0; i < d_head / 2; ++i) {
        const double angle = static_cast<double>(pos) * inv_freq[i];
        const auto c = static_cast<float>(std::cos(angle));
        const auto s = static_cast<float>(std::sin(angle));
        const float x0 = v[2 * i];
        const float x1 = v[2 * i + 1];
        v[2 * i] = x0 * c - x1 * s;
        v[2 * i + 1] = x0 * s + x1 * c;
    }
}

float silu(float x) { return x / (1.0f + std::exp(-x)); }

}  // namespace

// ---------------------------------------------------------------------------

void ModelConfig::validate() const {
    if (n_layers == 0 || n_heads == 0 || d_model == 0 || d_head == 0 || d_kv_total == 0 || d_ff == 0 ||
        vocab_size == 0 || max_position == 0) {
        throw std::invalid_argument("model dimensions must all be positive");
    }
    if (d_model != n_heads * d_head) {
        throw std::invalid_argument(
            fmt::format("d_model ({}) must equal n_heads ({}) * d_head ({})", d_model, n_heads, d_head));
    }
    if (d_head % 2 != 0) throw std::invalid_argument("d_head must be even for rotary embeddings");
    if (d_kv_total % d_head != 0) throw std::invalid_argument("d_kv_total must be a multiple of d_head");
    if (n_heads % n_kv_heads() != 0) throw std::invalid_argument("n_heads must be a multiple of the kv head count");
    if (!(rope_theta > 0.0)) throw std::invalid_argument("rope_theta must be positive");
}

std::vector<ChunkIndex> KvCache::resident_chunks() const {
    std::vector<ChunkIndex> out;
    out.reserve(chunks_.size());
    for (const auto& [idx, blocks] : chunks_) out.push_back(idx);
    return out;
}

std::size_t KvCache::resident_tokens() const {
    std::size_t n = 0;
    for (const auto& [idx, blocks] : chunks_) n += blocks.front().length;
    return n;
}

void KvCache::evict(ChunkIndex chunk) {
    if (chunks_.erase(chunk) == 0) throw std::invalid_argument(fmt::format("chunk {} is not resident", chunk));
}

AttentionCost attention_cost(std::uint64_t n_dense, std::uint64_t k, std::uint64_t m) {
    if (n_dense == 0) throw std::invalid_argument("attention_cost needs N >= 1");
    if (k * m > n_dense) throw std::invalid_argument("attention_cost needs k*m <= N");
    AttentionCost c;
    c.dense = n_dense * n_dense;
    c.sparse = (k * m) * (k * m);
    const double r = static_cast<double>(k * m) / static_cast<double>(n_dense);
    c.ratio = r * r;
    return c;
}

// ---------------------------------------------------------------------------

template <typename Self, typename Fn>
void Model::visit_tensors(Self& self, Fn&& fn) {
    fn(self.embedding_);
    fn(self.final_norm_);
    for (auto& l : self.layers_) {
        fn(l.attn_norm);
        fn(l.wq);
        fn(l.wk);
        fn(l.wv);
        fn(l.wo);
        fn(l.mlp_norm);
        fn(l.w_gate);
        fn(l.w_up);
        fn(l.w_down);
    }
}

Model::Model(ModelConfig config) : cfg_(config) {
    cfg_.validate();
    const std::size_t d = cfg_.d_model, kv = cfg_.d_kv_total, ff = cfg_.d_ff;

    inv_freq_.resize(cfg_.d_head / 2);
    for (std::size_t i = 0; i < inv_freq_.size(); ++i) {
        inv_freq_[i] = std::pow(cfg_.rope_theta, -2.0 * static_cast<double>(i) / static_cast<double>(cfg_.d_head));
    }

    // mt19937_64 output is fixed by the standard; the distributions are not, so map bits by hand.
    std::mt19937_64 rng(cfg_.init_seed);
    auto fill = [&](std::vector<float>& t, std::size_t n, double scale) {
        t.resize(n);
        for (auto& x : t) {
            const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            x = static_cast<float>((2.0 * u - 1.0) * scale);
        }
    };
    auto ones = [](std::vector<float>& t, std::size_t n) { t.assign(n, 1.0f); };

    fill(embedding_, static_cast<std::size_t>(cfg_.vocab_size) * d, 1.0);
    ones(final_norm_, d);
    layers_.resize(cfg_.n_layers);
    const double s_in = 1.0 / std::sqrt(static_cast<double>(d));
    const double s_ff = 1.0 / std::sqrt(static_cast<double>(ff));
    for (auto& l : layers_) {
        ones(l.attn_norm, d);
        fill(l.wq, d * d, s_in);
        fill(l.wk, kv * d, s_in);
        fill(l.wv, kv * d, s_in);
        fill(l.wo, d * d, s_in);
        ones(l.mlp_norm, d);
        fill(l.w_gate, ff * d, s_in);
        fill(l.w_up, ff * d, s_in);
        fill(l.w_down, d * ff, s_ff);
    }
}

void Model::check_positions(std::size_t begin, std::size_t len) const {
    if (begin + len > cfg_.max_position) {
        throw std::out_of_range(fmt::format("positions [{}, {}) exceed max_position {}", begin, begin + len,
                                            cfg_.max_position));
    }
}

Model::BlockRun Model::run_block(std::span<const TokenId> tokens, std::size_t pos_begin,
                                 const std::vector<std::vector<Segment>>& context) const {
    const std::size_t n = tokens.size();
    const std::size_t d = cfg_.d_model, kv = cfg_.d_kv_total, dh = cfg_.d_head, ff = cfg_.d_ff;
    const std::size_t group = cfg_.n_heads / cfg_.n_kv_heads();
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
    check_positions(pos_begin, n);

    BlockRun run;
    run.layers.resize(cfg_.n_layers);
    std::vector<float> x(n * d);
    for (std::size_t t = 0; t < n; ++t) {
        if (tokens[t] >= cfg_.vocab_size) {
            throw std::out_of_range(fmt::format("token id {} outside vocabulary {}", tokens[t], cfg_.vocab_size));
        }
        std::copy_n(embedding_.data() + static_cast<std::size_t>(tokens[t]) * d, d, x.data() + t * d);
    }

    std::size_t ctx_len = 0;
    for (const auto& seg : context.empty() ? std::vector<Segment>{} : context.front()) ctx_len += seg.len;

    std::vector<float> h(d), q(n * d), attn(d), o(d), gate(ff), up(ff);
    std::vector<float> scores(ctx_len + n);

    for (std::size_t li = 0; li < cfg_.n_layers; ++li) {
        const Layer& L = layers_[li];
        KvBlock& blk = run.layers[li];
        blk.pos_begin = pos_begin;
        blk.length = n;
        blk.k.resize(n * kv);
        blk.v.resize(n * kv);

        for (std::size_t t = 0; t < n; ++t) {
            rmsnorm(x.data() + t * d, L.attn_norm.data(), h.data(), d);
            float* qt = q.data() + t * d;
            float* kt = blk.k.data() + t * kv;
            matvec(L.wq, h.data(), qt, d, d);
            matvec(L.wk, h.data(), kt, kv, d);
            matvec(L.wv, h.data(), blk.v.data() + t * kv, kv, d);
            for (std::size_t hd = 0; hd < cfg_.n_heads; ++hd) rotate(qt + hd * dh, dh, pos_begin + t, inv_freq_);
            for (std::size_t hd = 0; hd < cfg_.n_kv_heads(); ++hd) rotate(kt + hd * dh, dh, pos_begin + t, inv_freq_);
        }

        const auto& ctx = li < context.size() ? context[li] : std::vector<Segment>{};
        for (std::size_t t = 0; t < n; ++t) {
            std::vector<Segment> segs = ctx;
            segs.push_back({blk.k.data(), blk.v.data(), t + 1});
            const std::size_t total = ctx_len + t + 1;
            if (li == 0) run.causal += total;

            const float* qt = q.data() + t * d;
            for (std::size_t hd = 0; hd < cfg_.n_heads; ++hd) {
                const std::size_t kvh = hd / group;
                const float* qh = qt + hd * dh;
                std::size_t j = 0;
                for (const auto& seg : segs) {
                    for (std::size_t r = 0; r < seg.len; ++r) {
                        const float* kr = seg.k + r * kv + kvh * dh;
                        float dot = 0.0f;
                        for (std::size_t e = 0; e < dh; ++e) dot += qh[e] * kr[e];
                        scores[j++] = dot * scale;
                    }
                }
                float mx = scores[0];
                for (std::size_t i = 1; i < total; ++i) mx = std::max(mx, scores[i]);
                float sum = 0.0f;
                for (std::size_t i = 0; i < total; ++i) {
                    scores[i] = std::exp(scores[i] - mx);
                    sum += scores[i];
                }
                const float inv_sum = 1.0f / sum;
                float* out = attn.data() + hd * dh;
                std::fill_n(out, dh, 0.0f);
                j = 0;
                for (const auto& seg : segs) {
                    for (std::size_t r = 0; r < seg.len; ++r) {
                        const float p = scores[j++] * inv_sum;
                        const float* vr = seg.v + r * kv + kvh * dh;
                        for (std::size_t e = 0; e < dh; ++e) out[e] += p * vr[e];
                    }
                }
            }
            matvec(L.wo, attn.data(), o.data(), d, d);
            float* xt = x.data() + t * d;
            for (std::size_t i = 0; i < d; ++i) xt[i] += o[i];
        }

        for (std::size_t t = 0; t < n; ++t) {
            float* xt = x.data() + t * d;
            rmsnorm(xt, L.mlp_norm.data(), h.data(), d);
            matvec(L.w_gate, h.data(), gate.data(), ff, d);
            matvec(L.w_up, h.data(), up.data(), ff, d);
            for (std::size_t i = 0; i < ff; ++i) gate[i] = silu(gate[i]) * up[i];
            matvec(L.w_down, gate.data(), o.data(), d, ff);
            for (std::size_t i = 0; i < d; ++i) xt[i] += o[i];
        }
    }
    run.hidden = std::move(x);
    return run;
}

std::vector<float> Model::logits_for(std::span<const float> hidden) const {
    const std::size_t d = cfg_.d_model;
    std::vector<float> h(d);
    rmsnorm(hidden.data(), final_norm_.data(), h.data(), d);
    std::vector<float> logits(cfg_.vocab_size);
    matvec(embedding_, h.data(), logits.data(), cfg_.vocab_size, d);
    return logits;
}

std::vector<std::vector<Model::Segment>> Model::chunk_context(const KvCache& cache, ChunkIndex before) const {
    std::vector<std::vector<Segment>> ctx(cfg_.n_layers);
    for (const auto& [idx, blocks] : cache.chunks_) {
        if (idx >= before) break;
        for (std::size_t li = 0; li < cfg_.n_layers; ++li) {
            ctx[li].push_back({blocks[li].k.data(), blocks[li].v.data(), blocks[li].length});
        }
    }
    return ctx;
}

PrefillCost Model::build_chunk(KvCache& cache, const Chunk& chunk) const {
    if (chunk.tokens.empty()) throw std::invalid_argument(fmt::format("chunk {} is empty", chunk.index));
    auto run = run_block(chunk.tokens, chunk.doc_token_offset, chunk_context(cache, chunk.index));
    cache.chunks_[chunk.index] = std::move(run.layers);
    return PrefillCost{chunk.size(), 0, run.causal};
}

PrefillCost Model::prefill(KvCache& cache, std::span<const Chunk> chunks) const {
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        if (i > 0 && chunks[i].index <= chunks[i - 1].index) {
            throw std::invalid_argument("prefill chunks must be in ascending document order");
        }
        if (cache.contains(chunks[i].index)) {
            throw std::invalid_argument(fmt::format("chunk {} is already resident", chunks[i].index));
        }
    }
    PrefillCost cost;
    for (const auto& c : chunks) cost += build_chunk(cache, c);
    cost.matrix = cost.tokens * cache.resident_tokens();
    return cost;
}

PrefillCost Model::prefill_dense(KvCache& cache, std::span<const Chunk> chunks) const {
    if (!cache.empty()) throw std::invalid_argument("dense prefill needs an empty cache");
    std::vector<TokenId> tokens;
    for (const auto& c : chunks) {
        if (c.doc_token_offset != tokens.size()) {
            throw std::invalid_argument("dense prefill needs chunks tiling the document from position 0");
        }
        tokens.insert(tokens.end(), c.tokens.begin(), c.tokens.end());
    }
    if (tokens.empty()) return {};
    auto run = run_block(tokens, 0, {});
    for (const auto& c : chunks) {
        std::vector<KvBlock> layers(cfg_.n_layers);
        for (std::size_t li = 0; li < cfg_.n_layers; ++li) {
            const auto& full = run.layers[li];
            const std::size_t kv = cfg_.d_kv_total;
            const auto b = static_cast<std::ptrdiff_t>(c.doc_token_offset * kv);
            const auto e = static_cast<std::ptrdiff_t>((c.doc_token_offset + c.size()) * kv);
            layers[li] = KvBlock{c.doc_token_offset, c.size(), std::vector<float>(full.k.begin() + b, full.k.begin() + e),
                                 std::vector<float>(full.v.begin() + b, full.v.begin() + e)};
        }
        cache.chunks_[c.index] = std::move(layers);
    }
    return PrefillCost{tokens.size(), static_cast<std::uint64_t>(tokens.size()) * tokens.size(), run.causal};
}

PrefillCost Model::recompute_kv(KvCache& cache, std::span<const ChunkIndex> chunk_indices,
                                std::span<const Chunk> doc_chunks) const {
    std::vector<ChunkIndex> order(chunk_indices.begin(), chunk_indices.end());
    std::sort(order.begin(), order.end());
    order.erase(std::unique(order.begin(), order.end()), order.end());
    for (ChunkIndex idx : order) {
        if (!cache.contains(idx)) throw std::invalid_argument(fmt::format("chunk {} is not resident", idx));
        if (idx >= doc_chunks.size()) throw std::logic_error(fmt::format("no tokens for chunk {}", idx));
    }
    PrefillCost cost;
    for (ChunkIndex idx : order) cost += build_chunk(cache, doc_chunks[idx]);
    cost.matrix = cost.tokens * cache.resident_tokens();
    return cost;
}

StepOutput Model::decode_step(KvCache& cache, TokenId token, std::size_t position) const {
    if (cache.empty()) throw std::invalid_argument("decode_step on an empty cache");
    const auto& gen0 = cache.generation_.front();
    if (gen0.length > 0 && position != gen0.pos_begin + gen0.length) {
        throw std::invalid_argument(fmt::format("decode position {} does not follow the generation block ending at {}",
                                                position, gen0.pos_begin + gen0.length));
    }
    auto ctx = chunk_context(cache, static_cast<ChunkIndex>(-1));
    for (std::size_t li = 0; li < cfg_.n_layers; ++li) {
        const auto& g = cache.generation_[li];
        if (g.length > 0) ctx[li].push_back({g.k.data(), g.v.data(), g.length});
    }
    auto run = run_block(std::span<const TokenId>(&token, 1), position, ctx);

    for (std::size_t li = 0; li < cfg_.n_layers; ++li) {
        auto& g = cache.generation_[li];
        if (g.length == 0) g.pos_begin = position;
        g.length += 1;
        g.k.insert(g.k.end(), run.layers[li].k.begin(), run.layers[li].k.end());
        g.v.insert(g.v.end(), run.layers[li].v.begin(), run.layers[li].v.end());
    }

    StepOutput out;
    out.logits = logits_for(run.hidden);
    out.score_elements = run.causal;
    std::size_t best = 0;
    for (std::size_t i = 0; i < out.logits.size(); ++i) {
        if (!std::isfinite(out.logits[i])) throw std::runtime_error("non-finite logit");
        if (out.logits[i] > out.logits[best]) best = i;
    }
    out.token = static_cast<TokenId>(best);
    return out;
}

std::vector<KvBlock> Model::forward_kv(std::span<const TokenId> tokens) const {
    return run_block(tokens, 0, {}).layers;
}

std::vector<float> Model::forward_logits(std::span<const TokenId> tokens) const {
    auto run = run_block(tokens, 0, {});
    std::vector<float> out;
    out.reserve(tokens.size() * cfg_.vocab_size);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        auto l = logits_for(std::span<const float>(run.hidden).subspan(t * cfg_.d_model, cfg_.d_model));
        out.insert(out.end(), l.begin(), l.end());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Snapshot: one JSON header line, then the tensors as little-endian float32.

void Model::save(const std::filesystem::path& path) const {
    static_assert(std::endian::native == std::endian::little, "snapshots assume a little-endian host");
    nlohmann::json header = {
        {"format", "apce-weights"},
        {"version", 1},
        {"config",
         {{"n_layers", cfg_.n_layers},
          {"n_heads", cfg_.n_heads},
          {"d_model", cfg_.d_model},
          {"d_head", cfg_.d_head},
          {"d_kv_total", cfg_.d_kv_total},
          {"d_ff", cfg_.d_ff},
          {"vocab_size", cfg_.vocab_size},
          {"rope_theta", cfg_.rope_theta},
          {"init_seed", cfg_.init_seed},
          {"max_position", cfg_.max_position}}},
    };
    std::size_t n_floats = 0;
    visit_tensors(*this, [&](const std::vector<float>& t) { n_floats += t.size(); });
    header["n_floats"] = n_floats;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    out << header.dump() << '\n';
    visit_tensors(*this, [&](const std::vector<float>& t) {
        out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    });
    if (!out) throw std::runtime_error(fmt::format("short write to '{}'", path.string()));
}

Model Model::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path.string()));
    std::string line;
    std::getline(in, line);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(fmt::format("'{}': bad snapshot header: {}", path.string(), e.what()));
    }
    if (header.value("format", "") != "apce-weights" || header.value("version", 0) != 1) {
        throw std::runtime_error(fmt::format("'{}' is not an apce weight snapshot", path.string()));
    }
    const auto& c = header.at("config");
    ModelConfig cfg;
    cfg.n_layers = c.at("n_layers");
    cfg.n_heads = c.at("n_heads");
    cfg.d_model = c.at("d_model");
    cfg.d_head = c.at("d_head");
    cfg.d_kv_total = c.at("d_kv_total");
    cfg.d_ff = c.at("d_ff");
    cfg.vocab_size = c.at("vocab_size");
    cfg.rope_theta = c.at("rope_theta");
    cfg.init_seed = c.at("init_seed");
    cfg.max_position = c.at("max_position");

    Model m(cfg);
    std::size_t expected = 0;
    visit_tensors(m, [&](std::vector<float>& t) { expected += t.size(); });
    if (header.at("n_floats").get<std::size_t>() != expected) {
        throw std::runtime_error(fmt::format("'{}': tensor size does not match its config", path.string()));
    }
    visit_tensors(m, [&](std::vector<float>& t) {
        in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    });
    if (!in) throw std::runtime_error(fmt::format("'{}': truncated tensor data", path.string()));
    if (in.peek() != std::char_traits<char>::eof()) {
        throw std::runtime_error(fmt::format("'{}': trailing bytes after tensor data", path.string()));
    }
    return m;
}

// ---------------------------------------------------------------------------

void ModelKvBackend::evict(ChunkIndex chunk) { cache_->evict(chunk); }

void ModelKvBackend::load(std::span<const ChunkIndex> chunks) {
    std::vector<ChunkIndex> order(chunks.begin(), chunks.end());
    std::sort(order.begin(), order.end());
    for (ChunkIndex idx : order) {
        if (idx >= doc_chunks_.size() || doc_chunks_[idx].index != idx || doc_chunks_[idx].tokens.empty()) {
            throw std::logic_error(fmt::format("K/V backend has no tokens for chunk {}", idx));
        }
    }
    PrefillCost cost;
    for (ChunkIndex idx : order) {
        if (cache_->contains(idx)) {
            cost += model_->recompute_kv(*cache_, std::span<const ChunkIndex>(&idx, 1), doc_chunks_);
        } else {
            cost += model_->prefill(*cache_, std::span<const Chunk>(&doc_chunks_[idx], 1));
        }
    }
    cost_ += cost;
}

}  // namespace apce
