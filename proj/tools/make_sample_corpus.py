#!/usr/bin/env python3
# Copyright (C) 2026 The APCE Authors
# SPDX-License-Identifier: Apache-2.0
"""Writes corpus/sample.jsonl: short synthetic chapters with a query and a reference summary."""

import json
import random
import sys
from pathlib import Path

TOPICS = {
    "harbor": ["ship", "tide", "dock", "sailor", "rope", "anchor", "gull", "storm", "lantern", "net"],
    "orchard": ["apple", "ladder", "basket", "blossom", "farmer", "cider", "branch", "frost", "bee", "harvest"],
    "library": ["book", "shelf", "archive", "reader", "candle", "ink", "scroll", "index", "clerk", "map"],
    "mountain": ["ridge", "snow", "climber", "pass", "cairn", "goat", "glacier", "summit", "wind", "camp"],
}
FILLER = ["the", "a", "and", "then", "slowly", "every", "morning", "old", "quiet", "near", "under", "with"]
VERBS = ["watched", "carried", "found", "mended", "counted", "lost", "followed", "remembered"]


def sentence(rng, words):
    parts = [rng.choice(FILLER), rng.choice(words), rng.choice(VERBS), rng.choice(FILLER), rng.choice(words)]
    return " ".join(parts).capitalize() + "."


def chapter(rng, topics, sentences_per_topic):
    out = []
    for t in topics:
        out.extend(sentence(rng, TOPICS[t]) for _ in range(sentences_per_topic))
    return " ".join(out)


def main(path):
    rng = random.Random(20260101)
    records = []
    layouts = [("harbor", "orchard", "library"), ("mountain", "harbor", "orchard", "library"),
               ("library", "mountain", "orchard")]
    for i, layout in enumerate(layouts):
        focus = layout[-1]
        records.append({
            "id": f"chapter-{i + 1}",
            "text": chapter(rng, layout, 60),
            "query": f"Summarize what happens with the {TOPICS[focus][0]} and the {TOPICS[focus][3]}.",
            "reference": " ".join(sentence(rng, TOPICS[focus]) for _ in range(4)),
        })
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "corpus/sample.jsonl")
