// Copyright (C) 2026 The APCE Authors
// SPDX-License-Identifier: Apache-2.0

#include "apce/textpipe.h"

#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace apce {

namespace {

bool is_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_punct(unsigned char c) {
    return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
           (c >= 0x7B && c <= 0x7E);
}

template <typename Fn>
void for_each_piece(std::string_view text, Fn&& fn) {
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (is_space(c)) {
            ++i;
        } else if (is_punct(c)) {
            fn(i, i + 1);
            ++i;
        } else {
            std::size_t j = i + 1;
            while (j < n) {
                const auto d = static_cast<unsigned char>(text[j]);
                if (is_space(d) || is_punct(d)) break;
                ++j;
            }
            fn(i, j);
            i = j;
        }
    }
}

}  // namespace

std::uint32_t fnv1a32(std::string_view bytes) {
    std::uint32_t h = 2166136261u;
    for (char ch : bytes) {
        h ^= static_cast<unsigned char>(ch);
        h *= 16777619u;
    }
    return h;
}

Tokenizer::Tokenizer(std::uint32_t vocab_size) : vocab_size_(vocab_size) {
    if (vocab_size == 0) throw std::invalid_argument("tokenizer vocab_size must be positive");
}

TokenId Tokenizer::id_of(std::string_view piece) const { return fnv1a32(piece) % vocab_size_; }

TokenSequence Tokenizer::tokenize(std::string_view text) const {
    TokenSequence out;
    for_each_piece(text, [&](std::size_t b, std::size_t e) {
        out.tokens.push_back(id_of(text.substr(b, e - b)));
        out.spans.push_back({b, e});
    });
    return out;
}

std::vector<std::string_view> Tokenizer::split(std::string_view text) {
    std::vector<std::string_view> pieces;
    for_each_piece(text, [&](std::size_t b, std::size_t e) { pieces.push_back(text.substr(b, e - b)); });
    return pieces;
}

void Vocabulary::observe(std::string_view text) {
    for (auto piece : Tokenizer::split(text)) {
        surfaces_.try_emplace(tokenizer_->id_of(piece), piece);
    }
}

std::optional<std::string_view> Vocabulary::surface(TokenId id) const {
    auto it = surfaces_.find(id);
    if (it == surfaces_.end()) return std::nullopt;
    return std::string_view(it->second);
}

std::string Vocabulary::detokenize(std::span<const TokenId> ids) const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out.push_back(' ');
        if (auto s = surface(ids[i])) {
            out.append(*s);
        } else {
            out.append(fmt::format("#{}", ids[i]));
        }
    }
    return out;
}

std::vector<Chunk> chunk(std::span<const TokenId> tokens, std::size_t chunk_size) {
    if (chunk_size == 0) throw std::invalid_argument("chunk size must be at least 1");
    std::vector<Chunk> chunks;
    chunks.reserve((tokens.size() + chunk_size - 1) / chunk_size);
    for (std::size_t off = 0; off < tokens.size(); off += chunk_size) {
        const std::size_t len = std::min(chunk_size, tokens.size() - off);
        auto slice = tokens.subspan(off, len);
        chunks.push_back(Chunk{chunks.size(), off, std::vector<TokenId>(slice.begin(), slice.end())});
    }
    return chunks;
}

std::string_view utf8_tail(std::string_view text, std::size_t n) {
    if (n == 0) return text.substr(text.size());
    std::size_t count = 0;
    std::size_t i = text.size();
    while (i > 0) {
        --i;
        // continuation bytes are 10xxxxxx
        if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) {
            if (++count == n) return text.substr(i);
        }
    }
    return text;
}

std::vector<CorpusRecord> load_corpus_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot open corpus file '{}'", path.string()));

    std::vector<CorpusRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(fmt::format("{}:{}: invalid JSON: {}", path.string(), line_no, e.what()));
        }
        auto get_string = [&](const char* key, bool required) -> std::optional<std::string> {
            if (!j.contains(key) || j[key].is_null()) {
                if (required) {
                    throw ParseError(fmt::format("{}:{}: missing field \"{}\"", path.string(), line_no, key));
                }
                return std::nullopt;
            }
            if (!j[key].is_string()) {
                throw ParseError(fmt::format("{}:{}: field \"{}\" must be a string", path.string(), line_no, key));
            }
            return j[key].get<std::string>();
        };
        CorpusRecord rec;
        rec.id = get_string("id", false).value_or(fmt::format("record{}", records.size()));
        rec.text = *get_string("text", true);
        rec.query = *get_string("query", true);
        rec.reference = get_string("reference", false);
        records.push_back(std::move(rec));
    }
    return records;
}

CorpusRecord load_text_record(const std::filesystem::path& path, std::string query) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(fmt::format("cannot open text file '{}'", path.string()));
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return CorpusRecord{path.stem().string(), std::move(text), std::move(query), std::nullopt};
}

}  // namespace apce
