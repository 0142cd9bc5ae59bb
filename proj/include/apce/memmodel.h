// Copyright (C) 2026 The APCE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace apce::mem {

/// Per-layer attention dimensions; defaults are a Llama-3.2-3B attention layer in FP16.
struct Dims {
    std::uint64_t d_q = 3072;   // query / output width
    std::uint64_t d_kv = 1024;  // K (or V) width summed over kv heads
    std::uint64_t bytes_per_element = 2;
};

// Byte counts for one self-attention layer over L effective tokens.
std::uint64_t kv_cache_bytes(std::uint64_t tokens, const Dims& dims);      // 2 L d_kv
std::uint64_t prefill_attn_bytes(std::uint64_t tokens, const Dims& dims);  // 2 L d_kv + 2 L d_q + L^2
std::uint64_t decode_attn_bytes(std::uint64_t tokens, const Dims& dims);   // 2 L d_kv + L + 2 d_q

inline constexpr double kBytesPerMB = 1048576.0;
inline double to_mb(std::uint64_t bytes) { return static_cast<double>(bytes) / kBytesPerMB; }
/// Rounds to two decimals, ties to even (21.875 -> 21.88, 1003.125 -> 1003.12).
double round2(double x);

/// Token count whose KV cache occupies `mb` megabytes (nearest integer).
std::uint64_t tokens_for_kv_mb(double mb, const Dims& dims);

enum class Method { dense, apce };

struct MemConfig {
    std::string context;  // row group label, e.g. "8k"
    Method method = Method::dense;
    std::uint64_t seq_len = 0;            // dense length L
    std::uint64_t n_chunks_selected = 0;  // k (apce rows)
    std::uint64_t chunk_size = 0;         // m (apce rows)
    Dims dims;

    std::uint64_t effective_tokens() const { return method == Method::apce ? n_chunks_selected * chunk_size : seq_len; }
    void validate() const;  // throws std::invalid_argument
};

/// Printed reference cells to compare a row against.
struct ReferenceCells {
    double kv_mb = 0.0;
    double prefill_mb = 0.0;
    double decode_mb = 0.0;
};

struct RowInput {
    MemConfig config;
    std::optional<ReferenceCells> reference;
};

struct ReportRow {
    MemConfig config;
    std::uint64_t tokens = 0;
    std::uint64_t kv_bytes = 0;
    std::uint64_t prefill_bytes = 0;
    std::uint64_t decode_bytes = 0;
    double kv_mb = 0.0;  // rounded to 2 decimals
    double prefill_mb = 0.0;
    double decode_mb = 0.0;
    std::optional<ReferenceCells> reference;
    // set when a reference exists and the rounded value differs from it
    bool kv_mismatch = false;
    bool prefill_mismatch = false;
    bool decode_mismatch = false;
};

/// Savings of an apce row against the dense row of the same context group, in percent.
struct Savings {
    std::string context;
    double kv_pct = 0.0;
    double prefill_pct = 0.0;
    double decode_pct = 0.0;
};

struct MemoryReport {
    std::vector<ReportRow> rows;
    std::vector<Savings> savings;

    std::size_t mismatches() const;
};

MemoryReport memory_report(std::span<const RowInput> rows);

/**
 * The six reference rows: 8k/20k/30k groups, dense and 70% selection at 800-token
 * chunks (k = 7, 18, 24). Dense lengths are recovered from the printed KV cells
 * (32.40, 78.56, 116.89 MB), giving L = 8294, 20111, 29924.
 */
std::vector<RowInput> reference_rows(const Dims& dims = {});

std::string format_text(const MemoryReport& report, bool flag_inconsistent);
std::string format_csv(const MemoryReport& report);
nlohmann::json to_json(const MemoryReport& report);

}  // namespace apce::mem
