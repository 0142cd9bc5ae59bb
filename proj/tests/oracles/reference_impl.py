# Copyright (C) 2026 The APCE Authors
# SPDX-License-Identifier: Apache-2.0
"""Standalone reimplementation of the tokenizer, hashing embedder and query blend.

Written from the scheme description only, without reading the C++ sources, so the
frozen outputs act as an independent oracle.
"""

import math

MASK64 = (1 << 64) - 1
SPACE = set(b" \t\n\r\f\v")
PUNCT = set(range(0x21, 0x30)) | set(range(0x3A, 0x41)) | set(range(0x5B, 0x61)) | set(range(0x7B, 0x7F))
SIGN_SALT = 0x5BD1E9955BD1E995


def pieces(text: str):
    data = text.encode("utf-8")
    out, i = [], 0
    while i < len(data):
        c = data[i]
        if c in SPACE:
            i += 1
        elif c in PUNCT:
            out.append(data[i:i + 1])
            i += 1
        else:
            j = i + 1
            while j < len(data) and data[j] not in SPACE and data[j] not in PUNCT:
                j += 1
            out.append(data[i:j])
            i = j
    return out


def fnv1a32(b: bytes) -> int:
    h = 2166136261
    for c in b:
        h ^= c
        h = (h * 16777619) & 0xFFFFFFFF
    return h


def tokenize(text: str, vocab: int = 32768):
    return [fnv1a32(p) % vocab for p in pieces(text)]


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def normalize(v):
    s = 0.0
    for x in v:
        s += x * x
    inv = 1.0 / math.sqrt(s)
    return [x * inv for x in v]


def embed(tokens, dim: int = 384):
    acc = [0.0] * dim
    for t in tokens:
        sign = -1.0 if (splitmix64(t ^ SIGN_SALT) >> 63) else 1.0
        acc[splitmix64(t) % dim] += sign
    return normalize(acc)


def blend(instruction: str, generated, tail_chars=100, recent_tokens=50, alpha=0.5, dim=384, vocab=32768):
    a = embed(tokenize(instruction[-tail_chars:], vocab), dim)
    window = generated[-recent_tokens:] if recent_tokens else []
    if not window:
        return a
    b = embed(window, dim)
    return normalize([alpha * x + (1.0 - alpha) * y for x, y in zip(a, b)])
