"""Deterministic text normalization shared by indexing, chunking, and scoring.

Tokenization rule: Unicode NFC, lowercase, split on any run of
non-alphanumeric characters, where alphanumeric means Unicode categories
L* or N*. No stemming, no stopword removal; word counting everywhere in
the pipeline uses these tokens.

Sentence rule: a boundary falls after '.', '!' or '?' when followed by
whitespace or end of text. No abbreviation handling; downstream chunking
tolerates occasional over-splitting.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass


@dataclass(frozen=True)
class Token:
    """One normalized word with its character span in the NFC source."""

    text: str
    start: int
    end: int

    @property
    def char_span(self) -> tuple[int, int]:
        return (self.start, self.end)


@dataclass(frozen=True)
class Sentence:
    """Half-open token index range [first, last_exclusive)."""

    first: int
    last_exclusive: int

    @property
    def token_range(self) -> tuple[int, int]:
        return (self.first, self.last_exclusive)

    def __len__(self) -> int:
        return self.last_exclusive - self.first


_TERMINATORS = frozenset(".!?")


def _is_word_char(ch: str) -> bool:
    return unicodedata.category(ch)[0] in ("L", "N")


def _normalize_token(raw: str) -> str:
    # Lowercasing may introduce combining marks (e.g. dotted capital I);
    # strip anything that is no longer alphanumeric so re-tokenizing a
    # token yields the token itself.
    lowered = unicodedata.normalize("NFC", raw.lower())
    return "".join(ch for ch in lowered if _is_word_char(ch))


def nfc(text: str) -> str:
    """Canonical composition applied before any span arithmetic."""
    return unicodedata.normalize("NFC", text)


def tokenize(text: str) -> list[Token]:
    """Split text into lowercase alphanumeric tokens with source spans.

    Spans index into ``nfc(text)``. Tokens appear in source order; any
    UTF-8 string is accepted.
    """
    source = nfc(text)
    tokens: list[Token] = []
    start = None
    for i, ch in enumerate(source):
        if _is_word_char(ch):
            if start is None:
                start = i
        elif start is not None:
            norm = _normalize_token(source[start:i])
            if norm:
                tokens.append(Token(norm, start, i))
            start = None
    if start is not None:
        norm = _normalize_token(source[start:])
        if norm:
            tokens.append(Token(norm, start, len(source)))
    return tokens


def split_sentences(text: str) -> list[Sentence]:
    """Assign every token of ``text`` to exactly one sentence.

    Sentences with no tokens (e.g. a bare ``...``) are dropped; the
    returned ranges are adjacent, non-overlapping, and cover all tokens.
    """
    source = nfc(text)
    tokens = tokenize(text)
    return sentences_for_tokens(source, tokens)


def sentences_for_tokens(source: str, tokens: list[Token]) -> list[Sentence]:
    """Sentence ranges for an already-tokenized NFC source string."""
    if not tokens:
        return []
    cuts = [
        i
        for i, ch in enumerate(source)
        if ch in _TERMINATORS and (i + 1 == len(source) or source[i + 1].isspace())
    ]
    sentences: list[Sentence] = []
    tok_i = 0
    for cut in cuts:
        first = tok_i
        while tok_i < len(tokens) and tokens[tok_i].start <= cut:
            tok_i += 1
        if tok_i > first:
            sentences.append(Sentence(first, tok_i))
    if tok_i < len(tokens):
        sentences.append(Sentence(tok_i, len(tokens)))
    return sentences
