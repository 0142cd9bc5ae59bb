// Copyright (C) 2026 The APCE Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "apce/memmodel.h"

namespace apce::mem {
namespace {

TEST(MemModel, ByteFormulas) {
    const Dims d{4, 2, 1};
    EXPECT_EQ(kv_cache_bytes(10, d), 40u);
    EXPECT_EQ(prefill_attn_bytes(10, d), 40u + 80u + 100u);
    EXPECT_EQ(prefill_attn_bytes(10, Dims{4, 2, 2}), 2 * (40u + 80u + 100u));
    EXPECT_EQ(decode_attn_bytes(10, d), 40u + 10u + 8u);
    EXPECT_EQ(kv_cache_bytes(0, Dims{}), 0u);
    EXPECT_THROW(prefill_attn_bytes(0, Dims{}), std::invalid_argument);
}

TEST(MemModel, RoundsTiesToEven) {
    EXPECT_DOUBLE_EQ(round2(21.875), 21.88);
    EXPECT_DOUBLE_EQ(round2(1003.125), 1003.12);
    EXPECT_DOUBLE_EQ(round2(2.0 / 3.0), 0.67);
}

TEST(MemModel, DenseLengthsRecoveredFromKvCells) {
    EXPECT_EQ(tokens_for_kv_mb(32.40, Dims{}), 8294u);
    EXPECT_EQ(tokens_for_kv_mb(78.56, Dims{}), 20111u);
    EXPECT_EQ(tokens_for_kv_mb(116.89, Dims{}), 29924u);
}

TEST(MemModel, ReferenceTableHasExactlyTwoInconsistentCells) {
    const auto rows = reference_rows();
    ASSERT_EQ(rows.size(), 6u);
    const auto report = memory_report(rows);
    EXPECT_EQ(report.mismatches(), 2u);
    std::size_t matched = 0;
    for (const auto& r : report.rows) {
        ASSERT_TRUE(r.reference.has_value());
        matched += !r.kv_mismatch;
        matched += !r.prefill_mismatch;
        matched += !r.decode_mismatch;
        const bool flagged_row = r.config.method == Method::dense && r.config.context != "8k";
        EXPECT_EQ(r.prefill_mismatch, flagged_row) << r.config.context;
        EXPECT_FALSE(r.kv_mismatch) << r.config.context;
        EXPECT_FALSE(r.decode_mismatch) << r.config.context;
    }
    EXPECT_EQ(matched, 16u);
    // dense 20k and 30k prefill: the formula gives these, the printed cells differ
    EXPECT_DOUBLE_EQ(report.rows[2].prefill_mb, 1085.67);
    EXPECT_DOUBLE_EQ(report.rows[4].prefill_mb, 2175.49);
}

TEST(MemModel, SavingsFollowSelectionRatioForKv) {
    const auto report = memory_report(reference_rows());
    ASSERT_EQ(report.savings.size(), 3u);
    const double ratios[] = {5600.0 / 8294.0, 14400.0 / 20111.0, 19200.0 / 29924.0};
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_NEAR(report.savings[i].kv_pct, 100.0 * (1.0 - ratios[i]), 1e-9);
        EXPECT_GT(report.savings[i].prefill_pct, report.savings[i].kv_pct);  // quadratic term
    }
}

TEST(MemModel, RejectsInvalidRows) {
    MemConfig c{"x", Method::apce, 100, 0, 800, Dims{}};
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = MemConfig{"x", Method::dense, 100, 0, 0, Dims{0, 1, 2}};
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(MemModel, OutputFormats) {
    const auto report = memory_report(reference_rows());
    const auto text = format_text(report, true);
    EXPECT_NE(text.find("1085.67"), std::string::npos);
    EXPECT_NE(text.find("APCE (k=24, m=800)"), std::string::npos);
    const auto csv = format_csv(report);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
    const auto j = to_json(report);
    EXPECT_EQ(j["rows"].size(), 6u);
}

TEST(MemModelProperty, MonotoneAndQuadraticPrefill) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 1000; ++trial) {
        const Dims d{1 + rng() % 8192, 1 + rng() % 4096, 1 + rng() % 4};
        const std::uint64_t L = rng() % 100000;
        ASSERT_LE(kv_cache_bytes(L, d), kv_cache_bytes(L + 1, d));
        ASSERT_LT(prefill_attn_bytes(L + 1, d), prefill_attn_bytes(L + 2, d));
        ASSERT_LT(decode_attn_bytes(L + 1, d), decode_attn_bytes(L + 2, d));
        ASSERT_EQ(kv_cache_bytes(2 * L, d), 2 * kv_cache_bytes(L, d));
        // second difference of the prefill bytes comes from the L^2 term alone
        ASSERT_EQ(prefill_attn_bytes(L + 3, d) + prefill_attn_bytes(L + 1, d),
                  2 * prefill_attn_bytes(L + 2, d) + 2 * d.bytes_per_element);
    }
}

}  // namespace
}  // namespace apce::mem
