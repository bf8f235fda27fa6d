#!/usr/bin/env python3
"""The three passage chunking modes on one document.

Shows how the sentence-complete mode closes a passage at the first
sentence end past the word target (keeping sentences whole), how the
sliding-window mode overlaps and caps passage counts, and the
one-passage-per-sentence mode used by sentence-level scoring.
"""

from telerank.chunking import (
    chunk_sentence_complete,
    chunk_sentences,
    chunk_windows,
    prepare_document,
)
from telerank.corpus import Document

# Sentences of 12, 9, 14 and 6 words; title becomes sentence 0.
doc = Document(
    id="sample",
    title="On the habits of lighthouse keepers",
    body=(
        "The keeper climbs the tower twice a day to trim the great lamp. "
        "Salt wind scours the gallery rail where gulls perch. "
        "At dusk the beam sweeps the water and small boats steer wide of the rocks. "
        "Logs record every passing ship."
    ),
)

prepared = prepare_document(doc)
print(f"{prepared.n_tokens()} tokens in {len(prepared.sentences)} sentences (title first)")
for i, s in enumerate(prepared.sentences):
    words = " ".join(t.text for t in prepared.tokens[s.first:s.last_exclusive])
    print(f"  sentence {i}: {len(s):2d} tokens | {words[:60]}{'...' if len(words) > 60 else ''}")
print()

print("sentence-complete, target 20 words per passage:")
for p in chunk_sentence_complete(prepared, target_len=20):
    print(f"  passage {p.index}: tokens [{p.start:2d}, {p.end:2d})  ({p.n_tokens()} words)")
print("  passages tile the document: no gaps, no overlap, sentences intact")
print()

print("sliding windows, 15 words with stride 10:")
for p in chunk_windows(prepared, window_len=15, stride=10, max_passages=None):
    print(f"  window {p.index}: tokens [{p.start:2d}, {p.end:2d})")
print()

print("capped windows (max 4 of them, first and last always kept):")
for p in chunk_windows(prepared, window_len=10, stride=5, max_passages=4, seed=123):
    print(f"  window {p.index}: tokens [{p.start:2d}, {p.end:2d})")
print()

print("sentence units:")
for p in chunk_sentences(prepared):
    print(f"  passage {p.index}: {p.text[:50]}{'...' if len(p.text) > 50 else ''}")
