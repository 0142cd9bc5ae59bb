// Copyright (C) 2026 The APCE Authors
// SPDX-License-Identifier: Apache-2.0

#include "apce/memmodel.h"

#include <cmath>
#include <map>
#include <stdexcept>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace apce::mem {

std::uint64_t kv_cache_bytes(std::uint64_t tokens, const Dims& dims) {
    return tokens * 2 * dims.d_kv * dims.bytes_per_element;
}

std::uint64_t prefill_attn_bytes(std::uint64_t tokens, const Dims& dims) {
    if (tokens == 0) throw std::invalid_argument("prefill attention needs at least one token");
    return (2 * tokens * dims.d_kv + 2 * tokens * dims.d_q + tokens * tokens) * dims.bytes_per_element;
}

std::uint64_t decode_attn_bytes(std::uint64_t tokens, const Dims& dims) {
    if (tokens == 0) throw std::invalid_argument("decode attention needs at least one token");
    return (2 * tokens * dims.d_kv + tokens + 2 * dims.d_q) * dims.bytes_per_element;
}

// bytes / 2^20 * 100 is exact in a double, so ties are real ties and go to even
double round2(double x) { return std::nearbyint(x * 100.0) / 100.0; }

std::uint64_t tokens_for_kv_mb(double mb, const Dims& dims) {
    return static_cast<std::uint64_t>(std::llround(mb * kBytesPerMB / static_cast<double>(2 * dims.d_kv * dims.bytes_per_element)));
}

void MemConfig::validate() const {
    if (dims.d_q == 0 || dims.d_kv == 0 || dims.bytes_per_element == 0) {
        throw std::invalid_argument("memory dims must be positive");
    }
    if (method == Method::dense) {
        if (seq_len == 0) throw std::invalid_argument("dense row needs seq_len >= 1");
    } else {
        if (n_chunks_selected == 0 || chunk_size == 0) {
            throw std::invalid_argument("apce row needs n_chunks >= 1 and chunk_size >= 1");
        }
        if (seq_len != 0 && n_chunks_selected * chunk_size > seq_len) {
            throw std::invalid_argument(fmt::format("apce row selects {} tokens out of {}",
                                                    n_chunks_selected * chunk_size, seq_len));
        }
    }
}

std::size_t MemoryReport::mismatches() const {
    std::size_t n = 0;
    for (const auto& r : rows) n += r.kv_mismatch + r.prefill_mismatch + r.decode_mismatch;
    return n;
}

MemoryReport memory_report(std::span<const RowInput> rows) {
    MemoryReport report;
    std::map<std::string, const ReportRow*> dense_by_context;
    report.rows.reserve(rows.size());
    for (const auto& row : rows) {
        row.config.validate();
        ReportRow r;
        r.config = row.config;
        r.tokens = row.config.effective_tokens();
        r.kv_bytes = kv_cache_bytes(r.tokens, row.config.dims);
        r.prefill_bytes = prefill_attn_bytes(r.tokens, row.config.dims);
        r.decode_bytes = decode_attn_bytes(r.tokens, row.config.dims);
        r.kv_mb = round2(to_mb(r.kv_bytes));
        r.prefill_mb = round2(to_mb(r.prefill_bytes));
        r.decode_mb = round2(to_mb(r.decode_bytes));
        r.reference = row.reference;
        if (row.reference) {
            // both sides are 2-decimal values; compare in hundredths
            auto differs = [](double a, double b) { return std::llround(a * 100.0) != std::llround(b * 100.0); };
            r.kv_mismatch = differs(r.kv_mb, row.reference->kv_mb);
            r.prefill_mismatch = differs(r.prefill_mb, row.reference->prefill_mb);
            r.decode_mismatch = differs(r.decode_mb, row.reference->decode_mb);
        }
        report.rows.push_back(std::move(r));
    }
    for (const auto& r : report.rows) {
        if (r.config.method == Method::dense && !r.config.context.empty()) dense_by_context.emplace(r.config.context, &r);
    }
    for (const auto& r : report.rows) {
        if (r.config.method != Method::apce) continue;
        auto it = dense_by_context.find(r.config.context);
        if (it == dense_by_context.end()) continue;
        const ReportRow& d = *it->second;
        auto pct = [](std::uint64_t a, std::uint64_t dn) {
            return 100.0 * (1.0 - static_cast<double>(a) / static_cast<double>(dn));
        };
        report.savings.push_back({r.config.context, pct(r.kv_bytes, d.kv_bytes), pct(r.prefill_bytes, d.prefill_bytes),
                                  pct(r.decode_bytes, d.decode_bytes)});
    }
    return report;
}

std::vector<RowInput> reference_rows(const Dims& dims) {
    struct Group {
        const char* context;
        ReferenceCells dense;
        ReferenceCells apce;
        std::uint64_t k;
    };
    static const Group groups[] = {
        {"8k", {32.40, 260.80, 32.43}, {21.88, 147.31, 21.90}, 7},
        {"20k", {78.56, 1060.0, 78.61}, {56.25, 620.51, 56.29}, 18},
        {"30k", {116.89, 2120.0, 116.96}, {75.00, 1003.12, 75.05}, 24},
    };
    constexpr std::uint64_t kChunkSize = 800;
    std::vector<RowInput> rows;
    for (const auto& g : groups) {
        const std::uint64_t L = tokens_for_kv_mb(g.dense.kv_mb, dims);
        rows.push_back({MemConfig{g.context, Method::dense, L, 0, 0, dims}, g.dense});
        rows.push_back({MemConfig{g.context, Method::apce, L, g.k, kChunkSize, dims}, g.apce});
    }
    return rows;
}

namespace {

std::string method_label(const MemConfig& c) {
    if (c.method == Method::dense) return "Dense";
    return fmt::format("APCE (k={}, m={})", c.n_chunks_selected, c.chunk_size);
}

}  // namespace

std::string format_text(const MemoryReport& report, bool flag_inconsistent) {
    std::string out = fmt::format("{:<8} {:<20} {:>7} {:>20} {:>20} {:>20}\n", "Context", "Method", "Tokens",
                                  "KV-cache (MB)", "Prefill Attn (MB)", "Decode Attn (MB)");
    auto cell = [&](double v, bool mismatch, std::optional<double> ref) {
        std::string s = fmt::format("{:.2f}", v);
        if (flag_inconsistent && mismatch && ref) s += fmt::format(" [!{:.2f}]", *ref);
        return s;
    };
    for (const auto& r : report.rows) {
        const auto ref = r.reference;
        out += fmt::format("{:<8} {:<20} {:>7} {:>20} {:>20} {:>20}\n", r.config.context, method_label(r.config),
                           r.tokens, cell(r.kv_mb, r.kv_mismatch, ref ? std::optional(ref->kv_mb) : std::nullopt),
                           cell(r.prefill_mb, r.prefill_mismatch, ref ? std::optional(ref->prefill_mb) : std::nullopt),
                           cell(r.decode_mb, r.decode_mismatch, ref ? std::optional(ref->decode_mb) : std::nullopt));
    }
    if (!report.savings.empty()) {
        out += "\nSavings vs dense (%)\n";
        for (const auto& s : report.savings) {
            out += fmt::format("{:<8} kv {:5.1f}  prefill {:5.1f}  decode {:5.1f}\n", s.context, s.kv_pct,
                               s.prefill_pct, s.decode_pct);
        }
    }
    if (flag_inconsistent) {
        const auto n = report.mismatches();
        out += n == 0 ? "\nAll reference cells reproduced.\n"
                      : fmt::format("\n{} cell(s) marked [!ref] differ from the reference value printed in brackets.\n", n);
    }
    return out;
}

std::string format_csv(const MemoryReport& report) {
    std::string out =
        "context,method,k,chunk_size,tokens,kv_bytes,prefill_bytes,decode_bytes,kv_mb,prefill_mb,decode_mb,"
        "ref_kv_mb,ref_prefill_mb,ref_decode_mb,kv_mismatch,prefill_mismatch,decode_mismatch\n";
    for (const auto& r : report.rows) {
        const auto& c = r.config;
        std::string ref = ",,";
        if (r.reference) ref = fmt::format("{:.2f},{:.2f},{:.2f}", r.reference->kv_mb, r.reference->prefill_mb, r.reference->decode_mb);
        out += fmt::format("{},{},{},{},{},{},{},{},{:.2f},{:.2f},{:.2f},{},{:d},{:d},{:d}\n", c.context,
                           c.method == Method::dense ? "dense" : "apce", c.n_chunks_selected, c.chunk_size, r.tokens,
                           r.kv_bytes, r.prefill_bytes, r.decode_bytes, r.kv_mb, r.prefill_mb, r.decode_mb, ref,
                           r.kv_mismatch, r.prefill_mismatch, r.decode_mismatch);
    }
    return out;
}

nlohmann::json to_json(const MemoryReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
        nlohmann::json row = {
            {"context", r.config.context},
            {"method", r.config.method == Method::dense ? "dense" : "apce"},
            {"seq_len", r.config.seq_len},
            {"n_chunks", r.config.n_chunks_selected},
            {"chunk_size", r.config.chunk_size},
            {"d_q", r.config.dims.d_q},
            {"d_kv", r.config.dims.d_kv},
            {"bytes_per_element", r.config.dims.bytes_per_element},
            {"tokens", r.tokens},
            {"kv_cache_bytes", r.kv_bytes},
            {"prefill_attn_bytes", r.prefill_bytes},
            {"decode_attn_bytes", r.decode_bytes},
            {"kv_cache_mb", r.kv_mb},
            {"prefill_attn_mb", r.prefill_mb},
            {"decode_attn_mb", r.decode_mb},
        };
        if (r.reference) {
            row["reference"] = {{"kv_cache_mb", r.reference->kv_mb},
                                {"prefill_attn_mb", r.reference->prefill_mb},
                                {"decode_attn_mb", r.reference->decode_mb}};
            row["mismatch"] = {{"kv_cache", r.kv_mismatch},
                               {"prefill_attn", r.prefill_mismatch},
                               {"decode_attn", r.decode_mismatch}};
        }
        rows.push_back(std::move(row));
    }
    nlohmann::json savings = nlohmann::json::array();
    for (const auto& s : report.savings) {
        savings.push_back({{"context", s.context},
                           {"kv_cache_pct", s.kv_pct},
                           {"prefill_attn_pct", s.prefill_pct},
                           {"decode_attn_pct", s.decode_pct}});
    }
    return {{"schema_version", 1},
            {"report_kind", "memtable"},
            {"mb_bytes", static_cast<std::uint64_t>(kBytesPerMB)},
            {"rows", std::move(rows)},
            {"savings", std::move(savings)},
            {"mismatched_cells", report.mismatches()}};
}

}  // namespace apce::mem
