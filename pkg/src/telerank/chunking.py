"""Split documents into passages.

Three modes:

* sentence_complete (default, target 100 words): fill a passage with
  whole sentences and close it at the first sentence end where the
  cumulative token count reaches the target. A sentence straddling the
  boundary stays whole inside the current passage, so passages tile the
  document with no gaps or overlaps.
* windows (150-word windows, 75-word stride, at most 30 kept): fixed
  sliding windows; generation stops once a window reaches the end of the
  document, so a trailing fragment already covered by the previous window
  is never emitted. When more than max_passages windows exist, the first,
  the last, and a seeded uniform sample of the interior are kept.
* sentences: one passage per sentence.

The document title is prepended as sentence 0; passage text is the
space-join of normalized tokens, so re-tokenizing a passage reproduces
its tokens exactly.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass

from .corpus import Document
from .textproc import Sentence, Token, nfc, sentences_for_tokens, tokenize

DEFAULT_TARGET_LEN = 100
DEFAULT_WINDOW_LEN = 150
DEFAULT_STRIDE = 75
DEFAULT_MAX_PASSAGES = 30

CHUNK_POLICIES = ("sentence100", "window150-75", "sentences")


@dataclass(frozen=True)
class Passage:
    doc_id: str
    index: int
    start: int   # token offsets into the prepared document stream
    end: int
    text: str

    @property
    def token_range(self) -> tuple[int, int]:
        return (self.start, self.end)

    def n_tokens(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class ChunkingPolicy:
    mode: str = "sentence_complete"   # sentence_complete | windows | sentences
    target_len: int = DEFAULT_TARGET_LEN
    window_len: int = DEFAULT_WINDOW_LEN
    stride: int = DEFAULT_STRIDE
    max_passages: int | None = DEFAULT_MAX_PASSAGES
    selection_seed: int = 123

    def __post_init__(self):
        if self.mode not in ("sentence_complete", "windows", "sentences"):
            raise ValueError(f"unknown chunking mode {self.mode!r}")
        if self.target_len < 1:
            raise ValueError("target_len must be at least 1")
        if self.stride > self.window_len:
            raise ValueError("stride must not exceed window_len")
        if self.stride < 1:
            raise ValueError("stride must be at least 1")
        if self.max_passages is not None and self.max_passages < 2:
            raise ValueError("max_passages must be at least 2 (first and last are always kept)")

    @classmethod
    def from_name(cls, name: str, seed: int = 123) -> "ChunkingPolicy":
        if name == "sentence100":
            return cls(mode="sentence_complete", selection_seed=seed)
        if name == "window150-75":
            return cls(mode="windows", selection_seed=seed)
        if name == "sentences":
            return cls(mode="sentences", selection_seed=seed)
        raise ValueError(f"unknown chunking policy {name!r}; expected one of {CHUNK_POLICIES}")


@dataclass(frozen=True)
class PreparedDocument:
    """Token stream with sentence boundaries: title tokens (as sentence 0)
    followed by body tokens."""

    doc_id: str
    tokens: tuple[Token, ...]
    sentences: tuple[Sentence, ...]

    def n_tokens(self) -> int:
        return len(self.tokens)


def prepare_document(doc: Document) -> PreparedDocument:
    """Tokenize title and body; the whole title forms sentence 0."""
    title_tokens = tokenize(doc.title) if doc.title else []
    body_source = nfc(doc.body)
    body_tokens = tokenize(doc.body)
    body_sentences = sentences_for_tokens(body_source, body_tokens)

    tokens = list(title_tokens) + body_tokens
    sentences: list[Sentence] = []
    if title_tokens:
        sentences.append(Sentence(0, len(title_tokens)))
    offset = len(title_tokens)
    for s in body_sentences:
        sentences.append(Sentence(s.first + offset, s.last_exclusive + offset))
    return PreparedDocument(doc_id=doc.id, tokens=tuple(tokens), sentences=tuple(sentences))


def _passage(prepared: PreparedDocument, index: int, start: int, end: int) -> Passage:
    text = " ".join(t.text for t in prepared.tokens[start:end])
    return Passage(doc_id=prepared.doc_id, index=index, start=start, end=end, text=text)


def chunk_sentence_complete(
    prepared: PreparedDocument, target_len: int = DEFAULT_TARGET_LEN
) -> list[Passage]:
    """Greedy sentence-complete chunking.

    Close the open passage at the first sentence end where its token
    count reaches target_len; a final short remainder forms its own
    passage and a single oversized sentence forms one oversized passage.
    """
    if target_len < 1:
        raise ValueError("target_len must be at least 1")
    passages: list[Passage] = []
    start: int | None = None
    for sent in prepared.sentences:
        if start is None:
            start = sent.first
        if sent.last_exclusive - start >= target_len:
            passages.append(_passage(prepared, len(passages), start, sent.last_exclusive))
            start = None
    if start is not None:
        passages.append(_passage(prepared, len(passages), start, prepared.n_tokens()))
    return passages


def window_spans(n_tokens: int, window_len: int, stride: int) -> list[tuple[int, int]]:
    """Window start/end offsets; generation stops at the first window that
    reaches the end of the token stream."""
    if stride > window_len or stride < 1:
        raise ValueError("require 1 <= stride <= window_len")
    spans: list[tuple[int, int]] = []
    start = 0
    while start < n_tokens:
        end = min(start + window_len, n_tokens)
        spans.append((start, end))
        if end == n_tokens:
            break
        start += stride
    return spans


def _interior_sample(n_windows: int, keep: int, seed: int, doc_id: str) -> list[int]:
    # Seed mixed with the doc id so per-document selection is independent
    # of processing order; sha256 keeps it stable across platforms.
    digest = hashlib.sha256(f"{seed}|{doc_id}".encode("utf-8")).digest()
    rng = random.Random(int.from_bytes(digest[:8], "big"))
    return sorted(rng.sample(range(1, n_windows - 1), keep))


def chunk_windows(
    prepared: PreparedDocument,
    window_len: int = DEFAULT_WINDOW_LEN,
    stride: int = DEFAULT_STRIDE,
    max_passages: int | None = DEFAULT_MAX_PASSAGES,
    seed: int = 123,
) -> list[Passage]:
    """Sliding-window chunking with optional first/last/random selection.

    When the window count exceeds max_passages, the first window, the
    last window, and max_passages - 2 interior windows sampled uniformly
    without replacement are kept, re-indexed 0..n-1 in document order.
    """
    spans = window_spans(prepared.n_tokens(), window_len, stride)
    if max_passages is not None and len(spans) > max_passages:
        keep = [0] + _interior_sample(len(spans), max_passages - 2, seed, prepared.doc_id) \
            + [len(spans) - 1]
        spans = [spans[i] for i in keep]
    return [_passage(prepared, i, s, e) for i, (s, e) in enumerate(spans)]


def chunk_sentences(prepared: PreparedDocument) -> list[Passage]:
    """One passage per sentence, in document order."""
    return [
        _passage(prepared, i, s.first, s.last_exclusive)
        for i, s in enumerate(prepared.sentences)
    ]


def chunk_document(doc: Document, policy: ChunkingPolicy) -> list[Passage]:
    prepared = prepare_document(doc)
    if policy.mode == "sentence_complete":
        return chunk_sentence_complete(prepared, policy.target_len)
    if policy.mode == "windows":
        return chunk_windows(
            prepared, policy.window_len, policy.stride, policy.max_passages,
            policy.selection_seed,
        )
    return chunk_sentences(prepared)


def chunk_corpus(documents: list[Document], policy: ChunkingPolicy) -> dict[str, list[Passage]]:
    return {doc.id: chunk_document(doc, policy) for doc in documents}


# ---------------------------------------------------------------------------
# Passage files: one JSON object per line
# {"doc_id": ..., "index": ..., "start": ..., "end": ..., "text": ...}


def write_passages(passages_by_doc: dict[str, list[Passage]], path: str) -> int:
    import json

    n = 0
    with open(path, "w", encoding="utf-8") as f:
        for doc_id in sorted(passages_by_doc):
            for p in passages_by_doc[doc_id]:
                f.write(json.dumps({
                    "doc_id": p.doc_id, "index": p.index,
                    "start": p.start, "end": p.end, "text": p.text,
                }, ensure_ascii=False, sort_keys=True) + "\n")
                n += 1
    return n


def load_passages(path: str) -> dict[str, list[Passage]]:
    import json

    from .errors import MalformedRecord

    by_doc: dict[str, dict[int, Passage]] = {}
    with open(path, encoding="utf-8") as f:
        for no, line in enumerate(f.read().splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                p = Passage(
                    doc_id=str(obj["doc_id"]), index=int(obj["index"]),
                    start=int(obj["start"]), end=int(obj["end"]), text=str(obj["text"]),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                raise MalformedRecord(path, no, "need doc_id, index, start, end, text") from None
            if p.index in by_doc.setdefault(p.doc_id, {}):
                raise MalformedRecord(path, no, f"duplicate passage ({p.doc_id}, {p.index})")
            by_doc[p.doc_id][p.index] = p
    out: dict[str, list[Passage]] = {}
    for doc_id, by_index in by_doc.items():
        indices = sorted(by_index)
        if indices != list(range(len(indices))):
            raise MalformedRecord(
                path, 0, f"passage indices for {doc_id!r} are not consecutive from 0"
            )
        out[doc_id] = [by_index[i] for i in indices]
    return out
