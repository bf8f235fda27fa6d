#!/usr/bin/env python3
"""Scoring through an external process over the wire protocol.

Spawns the sidecar's deterministic stub scorer (build it first with
`npm run build` in sidecar/), performs the handshake, scores a batch,
and shows that every score matches the documented SHA-256 formula.
"""

import hashlib
import sys
from pathlib import Path

from telerank.chunking import Passage
from telerank.corpus import Query
from telerank.scoring import ExternalScorer

SIDECAR = Path(__file__).parent.parent / "sidecar" / "dist" / "main.js"
if not SIDECAR.exists():
    sys.exit("sidecar not built: run `npm install && npm run build` in sidecar/ first")


def expected_score(query: str, passage: str) -> float:
    digest = hashlib.sha256(f"q:{query}|p:{passage}".encode()).digest()
    return int.from_bytes(digest[-4:], "big") / 2**32


query = Query("q1", "how do lighthouses work")
passages = [
    Passage(doc_id="d1", index=i, start=0, end=5, text=text)
    for i, text in enumerate([
        "the lamp rotates behind a fresnel lens",
        "gulls are common along the coast",
        "keepers once wound the clockwork by hand",
    ])
]

with ExternalScorer.spawn(f"node {SIDECAR} --mode stdio --model stub") as scorer:
    print(f"handshake: name={scorer.info.name!r} version={scorer.info.version!r}"
          f" max_batch={scorer.info.max_batch}")
    scores = scorer.score_batch(query, passages)

print()
for p, s in zip(passages, scores):
    check = "ok" if s == expected_score(query.text, p.text) else "MISMATCH"
    print(f"  passage {p.index}: score {s:.6f}  (formula check: {check})")

print()
print("the same protocol serves real models: run the sidecar with")
print("  --model xenova:<cross-encoder id>   (needs @huggingface/transformers)")
print("or point --scorer tcp:<host>:<port> at any process speaking the protocol.")
