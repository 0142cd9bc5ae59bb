// Copyright (C) 2026 The APCE Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "apce/embed.h"
#include "test_util.h"

namespace apce {
namespace {

void expect_unit(const Embedding& e) { EXPECT_NEAR(e.norm(), 1.0, 1e-6); }

TEST(HashingEmbedder, IdenticalChunksGiveIdenticalEmbeddings) {
    HashingEmbedder f;
    std::vector<TokenId> t{3, 1, 4, 1, 5, 9, 2, 6};
    EXPECT_EQ(f.embed(t).values, f.embed(t).values);
}

TEST(HashingEmbedder, RepeatedTokenHasOneUnitCoordinate) {
    HashingEmbedder f;
    std::vector<TokenId> t(12, 777);
    const auto e = f.embed(t);
    std::size_t nonzero = 0;
    for (double v : e.values) {
        if (v != 0.0) {
            ++nonzero;
            EXPECT_EQ(std::fabs(v), 1.0);
        }
    }
    EXPECT_EQ(nonzero, 1u);
}

TEST(HashingEmbedder, MatchesOracleForTwentyTokenChunk) {
    const auto g = test::golden()["embed_chunk"];
    HashingEmbedder f(g["dim"].get<std::size_t>());
    const auto e = f.embed(g["tokens"].get<std::vector<TokenId>>());
    const auto expected = g["values"].get<std::vector<double>>();
    ASSERT_EQ(e.dim(), expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_DOUBLE_EQ(e.values[i], expected[i]) << "coordinate " << i;
}

TEST(EmbedQueryText, MatchesOracle) {
    const auto g = test::golden()["embed_query"];
    HashingEmbedder f(g["dim"].get<std::size_t>());
    Tokenizer tok;
    const auto e = embed_query_text(f, tok, g["text"].get<std::string>());
    const auto expected = g["values"].get<std::vector<double>>();
    for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_DOUBLE_EQ(e.values[i], expected[i]) << "coordinate " << i;
}

TEST(EmbedQueryText, SharesThePathWithChunks) {
    HashingEmbedder f;
    Tokenizer tok;
    const std::string text = "summarize the chapter about the storm";
    const auto seq = tok.tokenize(text);
    const auto chunks = chunk(seq, 100);
    EXPECT_EQ(embed_query_text(f, tok, text).values, embed_chunk(f, chunks.front()).values);
    EXPECT_EQ(embed_query_text(f, tok, text).values, embed_query_text(f, tok, text).values);
}

TEST(EmbedQueryText, EmptyStringThrows) {
    HashingEmbedder f;
    Tokenizer tok;
    EXPECT_THROW(embed_query_text(f, tok, ""), std::invalid_argument);
    EXPECT_THROW(embed_query_text(f, tok, "   "), std::invalid_argument);
}

TEST(EmbedChunk, EmptyChunkThrows) {
    HashingEmbedder f;
    Chunk c;
    EXPECT_THROW(embed_chunk(f, c), std::invalid_argument);
    EXPECT_THROW(HashingEmbedder(0), std::invalid_argument);
}

TEST(HashingEmbedderProperty, UnitNormAndOrderInsensitive) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t dim = 1 + rng() % 512;
        HashingEmbedder f(dim);
        // odd length: the signed counts cannot all cancel
        auto t = test::random_tokens(rng, 1 + 2 * (rng() % 150), 32768);
        const auto e = f.embed(t);
        ASSERT_EQ(e.dim(), dim);
        for (double v : e.values) ASSERT_TRUE(std::isfinite(v));
        expect_unit(e);
        std::shuffle(t.begin(), t.end(), rng);
        ASSERT_EQ(f.embed(t).values, e.values);
    }
}

TEST(EmbeddingStore, ReadsAreStable) {
    HashingEmbedder f(64);
    std::mt19937_64 rng(3);
    const auto chunks = chunk(test::random_tokens(rng, 500, 32768), 50);
    const auto store = EmbeddingStore::build(f, chunks);
    ASSERT_EQ(store.size(), 10u);
    const auto first = store.chunk(4).values;
    for (int i = 0; i < 5; ++i) EXPECT_EQ(store.chunk(4).values, first);
    EXPECT_THROW(EmbeddingStore(3, {Embedding{{1.0, 0.0}}}), std::invalid_argument);
}

TEST(ExternalEmbeddings, ValidFileIsNormalized) {
    const auto p = test::temp_path("ext_ok.jsonl");
    test::write_text(p, R"({"chunk_index": 0, "vector": [3, 4, 0]})" "\n"
                        R"({"chunk_index": 2, "vector": [0, 0, 2]})" "\n"
                        R"({"chunk_index": 1, "vector": [1, 2, 2]})" "\n");
    const auto ext = load_external_embeddings(p);
    EXPECT_EQ(ext.dim, 3u);
    const auto store = ext.to_store(3);
    // hand-computed: |(3,4,0)| = 5, |(1,2,2)| = 3, |(0,0,2)| = 2
    EXPECT_DOUBLE_EQ(store.chunk(0).values[0], 0.6);
    EXPECT_DOUBLE_EQ(store.chunk(0).values[1], 0.8);
    EXPECT_DOUBLE_EQ(store.chunk(1).values[0], 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(store.chunk(1).values[2], 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(store.chunk(2).values[2], 1.0);
    for (const auto& e : store.chunks()) expect_unit(e);
    EXPECT_THROW(ext.to_store(4), std::invalid_argument);
}

std::string parse_error_of(const std::string& content) {
    const auto p = test::temp_path("ext_bad.jsonl");
    test::write_text(p, content);
    try {
        load_external_embeddings(p);
    } catch (const ParseError& e) {
        return e.what();
    }
    return "";
}

TEST(ExternalEmbeddings, MixedDimensionsNameTheLine) {
    const auto msg = parse_error_of(R"({"chunk_index": 0, "vector": [1, 0]})" "\n"
                                    R"({"chunk_index": 1, "vector": [1, 0, 0]})" "\n");
    EXPECT_NE(msg.find("dimension mismatch"), std::string::npos) << msg;
    EXPECT_NE(msg.find(":2"), std::string::npos) << msg;
}

TEST(ExternalEmbeddings, NonFiniteEntriesRejected) {
    EXPECT_NE(parse_error_of(R"({"chunk_index": 0, "vector": [1, NaN]})" "\n").find("non-finite"), std::string::npos);
    EXPECT_NE(parse_error_of(R"({"chunk_index": 0, "vector": [1, -Infinity]})" "\n").find("non-finite"),
              std::string::npos);
    EXPECT_NE(parse_error_of(R"({"chunk_index": 0, "vector": [1, "nan"]})" "\n").find("non-finite"), std::string::npos);
}

TEST(ExternalEmbeddings, DuplicateIndexRejected) {
    const auto msg = parse_error_of(R"({"chunk_index": 0, "vector": [1]})" "\n" R"({"chunk_index": 0, "vector": [2]})" "\n");
    EXPECT_NE(msg.find("duplicate"), std::string::npos) << msg;
}

TEST(ExternalEmbeddings, ZeroVectorRejected) {
    EXPECT_FALSE(parse_error_of(R"({"chunk_index": 0, "vector": [0, 0]})" "\n").empty());
}

TEST(EmbeddingStoreBytes, Products) {
    EXPECT_EQ(embedding_store_bytes(1, 384, 2), 768u);
    EXPECT_EQ(embedding_store_bytes(37, 384, 2), 28416u);
    EXPECT_DOUBLE_EQ(embedding_store_bytes(37, 384, 2) / 1024.0, 27.75);
    EXPECT_EQ(embedding_store_bytes(0, 384, 2), 0u);
}

}  // namespace
}  // namespace apce
