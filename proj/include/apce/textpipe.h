// Copyright (C) 2026 The APCE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace apce {

using TokenId = std::uint32_t;
using ChunkIndex = std::size_t;

/// Byte offsets [begin, end) of a token inside the text it was cut from.
struct CharSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
};

struct TokenSequence {
    std::vector<TokenId> tokens;
    std::vector<CharSpan> spans;  // empty when the sequence has no source text

    std::size_t size() const { return tokens.size(); }
    bool empty() const { return tokens.empty(); }
};

/// A contiguous slice of the document. Chunks are cut by token count only.
struct Chunk {
    ChunkIndex index = 0;
    std::size_t doc_token_offset = 0;
    std::vector<TokenId> tokens;

    std::size_t size() const { return tokens.size(); }
};

/**
 * Whitespace-and-punctuation tokenizer with hashed ids.
 *
 * A token is either a maximal run of bytes that are neither ASCII whitespace nor
 * ASCII punctuation, or a single ASCII punctuation byte. Non-ASCII bytes are word
 * bytes, so UTF-8 sequences are never split. The id is the 32-bit FNV-1a hash of
 * the token bytes modulo the vocabulary size.
 */
class Tokenizer {
public:
    static constexpr std::uint32_t kDefaultVocabSize = 32768;

    explicit Tokenizer(std::uint32_t vocab_size = kDefaultVocabSize);

    std::uint32_t vocab_size() const { return vocab_size_; }

    TokenSequence tokenize(std::string_view text) const;
    TokenId id_of(std::string_view piece) const;

    /// Splits text into surface pieces without hashing them.
    static std::vector<std::string_view> split(std::string_view text);

private:
    std::uint32_t vocab_size_;
};

std::uint32_t fnv1a32(std::string_view bytes);

/**
 * Reverse map from ids to a surface form observed under the same tokenizer.
 * Hash collisions keep the first surface seen, which re-tokenizes to the same id.
 */
class Vocabulary {
public:
    explicit Vocabulary(const Tokenizer& tokenizer) : tokenizer_(&tokenizer) {}

    void observe(std::string_view text);
    std::optional<std::string_view> surface(TokenId id) const;
    std::size_t size() const { return surfaces_.size(); }

    /// Joins surfaces with single spaces. Ids never observed render as "#<id>".
    std::string detokenize(std::span<const TokenId> ids) const;

private:
    const Tokenizer* tokenizer_;
    std::unordered_map<TokenId, std::string> surfaces_;
};

/// Partitions tokens into ceil(N / chunk_size) chunks; only the last may be short.
std::vector<Chunk> chunk(std::span<const TokenId> tokens, std::size_t chunk_size);
inline std::vector<Chunk> chunk(const TokenSequence& seq, std::size_t chunk_size) {
    return chunk(std::span<const TokenId>(seq.tokens), chunk_size);
}

/// Last `n` code points of a UTF-8 string (whole string if shorter).
std::string_view utf8_tail(std::string_view text, std::size_t n);

// ---------------------------------------------------------------------------
// Corpus ingestion

struct CorpusRecord {
    std::string id;
    std::string text;
    std::string query;
    std::optional<std::string> reference;
};

class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// JSON-lines with keys {"id", "text", "query", "reference"}; blank lines skipped.
std::vector<CorpusRecord> load_corpus_jsonl(const std::filesystem::path& path);

/// A plain UTF-8 text file becomes a single record named after the file stem.
CorpusRecord load_text_record(const std::filesystem::path& path, std::string query);

}  // namespace apce
