// Copyright (C) 2026 The APCE Authors
// SPDX-License-Identifier: Apache-2.0

#include "apce/reprior.h"

#include <algorithm>
#include <stdexcept>

#include <fmt/format.h>

namespace apce {

EnhancedQuery::EnhancedQuery(std::string instruction, QueryBlendConfig config, const EmbeddingProvider& provider,
                             const Tokenizer& tokenizer)
    : instruction_text_(std::move(instruction)), config_(config), provider_(&provider) {
    if (instruction_text_.empty()) throw std::invalid_argument("query instruction is empty");
    if (config_.tail_chars == 0) throw std::invalid_argument("query.tail_chars must be positive");
    if (!(config_.alpha >= 0.0 && config_.alpha <= 1.0)) throw std::invalid_argument("query.alpha must be in [0, 1]");
    instruction_ = embed_query_text(provider, tokenizer, utf8_tail(instruction_text_, config_.tail_chars));
    current_ = instruction_;
}

const Embedding& EnhancedQuery::update(std::span<const TokenId> generated) {
    const std::size_t window = std::min(generated.size(), config_.recent_tokens);
    if (window == 0) {
        current_ = instruction_;
        return current_;
    }
    const Embedding recent = provider_->embed(generated.last(window));
    std::vector<double> mix(instruction_.dim());
    for (std::size_t i = 0; i < mix.size(); ++i) {
        mix[i] = config_.alpha * instruction_.values[i] + (1.0 - config_.alpha) * recent.values[i];
    }
    try {
        current_ = normalized(std::move(mix));
    } catch (const std::invalid_argument&) {
        // the two terms cancelled exactly; fall back to the instruction alone
        current_ = instruction_;
    }
    return current_;
}

// ---------------------------------------------------------------------------

ChunkBuffer::ChunkBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("chunk buffer capacity must be at least 1");
}

std::vector<ChunkIndex> ChunkBuffer::indices() const {
    std::vector<ChunkIndex> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.chunk_index);
    return out;
}

const BufferEntry* ChunkBuffer::find(ChunkIndex chunk) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), chunk,
                               [](const BufferEntry& e, ChunkIndex c) { return e.chunk_index < c; });
    return (it != entries_.end() && it->chunk_index == chunk) ? &*it : nullptr;
}

bool ChunkBuffer::contains(ChunkIndex chunk) const { return find(chunk) != nullptr; }

void ChunkBuffer::insert(BufferEntry entry) {
    if (entries_.size() >= capacity_) {
        throw std::logic_error(fmt::format("chunk buffer is full ({} entries)", capacity_));
    }
    auto it = std::lower_bound(entries_.begin(), entries_.end(), entry.chunk_index,
                               [](const BufferEntry& e, ChunkIndex c) { return e.chunk_index < c; });
    if (it != entries_.end() && it->chunk_index == entry.chunk_index) {
        throw std::logic_error(fmt::format("chunk {} is already buffered", entry.chunk_index));
    }
    entries_.insert(it, entry);
}

void ChunkBuffer::erase(ChunkIndex chunk) {
    auto it = std::find_if(entries_.begin(), entries_.end(), [&](const BufferEntry& e) { return e.chunk_index == chunk; });
    if (it == entries_.end()) throw std::logic_error(fmt::format("chunk {} is not buffered", chunk));
    entries_.erase(it);
}

void ChunkBuffer::set_score(ChunkIndex chunk, double score) {
    if (auto* e = find_mut(chunk)) e->score = score;
}

void ChunkBuffer::mark(ChunkIndex chunk, bool resident, bool stale) {
    auto* e = find_mut(chunk);
    if (!e) throw std::logic_error(fmt::format("chunk {} is not buffered", chunk));
    e->kv_resident = resident;
    e->kv_stale = stale;
}

// ---------------------------------------------------------------------------

ReplacementPlan reprioritize(const ChunkBuffer& buffer, const EmbeddingStore& store, const Embedding& query,
                             std::size_t n_candidates) {
    ReplacementPlan plan;
    plan.scores = score_chunks(query, store, n_candidates);
    if (plan.scores.empty()) return plan;

    const auto target = select_top_k(plan.scores, buffer.capacity()).selected;
    const auto current = buffer.indices();
    std::set_difference(current.begin(), current.end(), target.begin(), target.end(), std::back_inserter(plan.evict));
    std::set_difference(target.begin(), target.end(), current.begin(), current.end(), std::back_inserter(plan.admit));
    if (plan.empty()) return plan;

    ChunkIndex pivot = static_cast<ChunkIndex>(-1);
    if (!plan.evict.empty()) pivot = std::min(pivot, plan.evict.front());
    if (!plan.admit.empty()) pivot = std::min(pivot, plan.admit.front());
    for (ChunkIndex c : current) {
        if (c > pivot && std::binary_search(target.begin(), target.end(), c)) plan.recompute.push_back(c);
    }
    return plan;
}

namespace {

double mean_score(const std::vector<ChunkIndex>& chunks, const std::vector<ChunkScore>& scores) {
    if (chunks.empty()) return 0.0;
    double s = 0.0;
    for (ChunkIndex c : chunks) {
        auto it = std::find_if(scores.begin(), scores.end(), [&](const ChunkScore& x) { return x.chunk_index == c; });
        if (it != scores.end()) s += it->score;
    }
    return s / static_cast<double>(chunks.size());
}

}  // namespace

bool apply_plan(ChunkBuffer& buffer, const ReplacementPlan& plan, KvBackend& kv, ReplacementStats& stats,
                const ApplyPolicy& policy) {
    if (plan.empty()) return false;

    for (ChunkIndex c : plan.evict) {
        if (!buffer.contains(c)) throw std::invalid_argument(fmt::format("plan evicts unbuffered chunk {}", c));
    }
    for (ChunkIndex c : plan.admit) {
        if (buffer.contains(c)) throw std::invalid_argument(fmt::format("plan admits buffered chunk {}", c));
    }
    if (buffer.size() - plan.evict.size() + plan.admit.size() > buffer.capacity()) {
        throw std::invalid_argument("plan would exceed buffer capacity");
    }

    ReplacementEvent event{buffer.generation_step(), plan.evict, plan.admit, plan.recompute, false};
    stats.available += 1;

    const bool accept = plan.evict.empty() || policy.min_gain <= 0.0 ||
                        mean_score(plan.admit, plan.scores) - mean_score(plan.evict, plan.scores) >= policy.min_gain;
    if (!accept) {
        stats.events.push_back(std::move(event));
        return false;
    }

    for (ChunkIndex c : plan.evict) {
        kv.evict(c);
        buffer.erase(c);
    }
    for (ChunkIndex c : plan.admit) {
        buffer.insert(BufferEntry{c, 0.0, false, false, buffer.generation_step()});
    }

    std::vector<ChunkIndex> build = plan.admit;
    if (policy.recompute) build.insert(build.end(), plan.recompute.begin(), plan.recompute.end());
    std::sort(build.begin(), build.end());
    kv.load(build);

    for (ChunkIndex c : plan.admit) buffer.mark(c, true, false);
    for (ChunkIndex c : plan.recompute) buffer.mark(c, true, !policy.recompute);
    for (const auto& s : plan.scores) buffer.set_score(s.chunk_index, s.score);

    event.applied = true;
    stats.taken += 1;
    stats.events.push_back(std::move(event));
    return true;
}

bool reprioritization_due(std::size_t generation_step, std::size_t interval) {
    if (interval == 0) throw std::invalid_argument("reprioritization interval must be at least 1");
    return generation_step > 0 && generation_step % interval == 0;
}

}  // namespace apce
