"""First-stage retrieval: in-memory inverted index with Dirichlet-smoothed
query likelihood and BM25.

Defaults: QL mu=2500, BM25 k1=0.9 b=0.4, top_k=1000. Under query
likelihood every document is a candidate (smoothing assigns nonzero mass);
under BM25 only documents sharing at least one query term are candidates.

Snapshot layout (single file, versioned):
    bytes 0..7   magic b"TLRKIDX1"
    bytes 8..11  format version, uint32 little-endian (currently 1)
    bytes 12..19 payload length, uint64 little-endian
    bytes 20..   UTF-8 JSON payload with keys postings, doc_lengths,
                 collection_length, doc_count
Loading refuses any other magic or version.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

from .corpus import Document, Query, RunEntry
from .errors import EmptyQuery, SnapshotVersionMismatch
from .textproc import tokenize

_SNAPSHOT_MAGIC = b"TLRKIDX1"
_SNAPSHOT_VERSION = 1

DEFAULT_MU = 2500.0
DEFAULT_K1 = 0.9
DEFAULT_B = 0.4
DEFAULT_TOP_K = 1000


@dataclass
class RetrievalParams:
    model: str = "ql"            # "ql" | "bm25"
    mu: float = DEFAULT_MU
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B
    top_k: int = DEFAULT_TOP_K

    def __post_init__(self):
        if self.model not in ("ql", "bm25"):
            raise ValueError(f"unknown retrieval model {self.model!r}")
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.k1 < 0:
            raise ValueError("k1 must be non-negative")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError("b must lie in [0, 1]")
        if self.top_k < 1:
            raise ValueError("top_k must be at least 1")


@dataclass
class InvertedIndex:
    postings: dict[str, list[tuple[str, int]]]   # term -> [(doc_id, tf)], sorted by doc_id
    doc_lengths: dict[str, int]
    collection_length: int
    doc_count: int
    doc_frequencies: dict[str, int] = field(init=False)
    collection_frequencies: dict[str, int] = field(init=False)
    _tf: dict[str, dict[str, int]] = field(init=False, repr=False)

    def __post_init__(self):
        self.doc_frequencies = {t: len(p) for t, p in self.postings.items()}
        self.collection_frequencies = {t: sum(tf for _, tf in p) for t, p in self.postings.items()}
        self._tf = {t: dict(p) for t, p in self.postings.items()}

    @property
    def avg_doc_length(self) -> float:
        return self.collection_length / self.doc_count if self.doc_count else 0.0

    def tf(self, term: str, doc_id: str) -> int:
        return self._tf.get(term, {}).get(doc_id, 0)

    def df(self, term: str) -> int:
        return self.doc_frequencies.get(term, 0)

    def cf(self, term: str) -> int:
        return self.collection_frequencies.get(term, 0)

    def doc_ids(self) -> list[str]:
        return sorted(self.doc_lengths)


def indexed_text(doc: Document) -> str:
    """Title prepended to the body, matching passage preparation."""
    return f"{doc.title} {doc.body}" if doc.title else doc.body


def build_index(documents: list[Document]) -> InvertedIndex:
    """Index tokenize(title + " " + body); empty documents get length 0."""
    postings: dict[str, dict[str, int]] = {}
    doc_lengths: dict[str, int] = {}
    total = 0
    for doc in documents:
        tokens = tokenize(indexed_text(doc))
        doc_lengths[doc.id] = len(tokens)
        total += len(tokens)
        for tok in tokens:
            postings.setdefault(tok.text, {}).setdefault(doc.id, 0)
            postings[tok.text][doc.id] += 1
    sorted_postings = {
        term: sorted(per_doc.items()) for term, per_doc in sorted(postings.items())
    }
    return InvertedIndex(
        postings=sorted_postings,
        doc_lengths=doc_lengths,
        collection_length=total,
        doc_count=len(documents),
    )


def _query_terms(query_text: str) -> list[str]:
    terms = [t.text for t in tokenize(query_text)]
    if not terms:
        raise EmptyQuery(f"query {query_text!r} has no tokens")
    return terms


def score_ql(query_text: str, doc_id: str, index: InvertedIndex, mu: float = DEFAULT_MU) -> float:
    """Dirichlet-smoothed query log-likelihood of the document.

    Each query token contributes log((tf + mu*cf/C) / (|d| + mu)). Tokens
    never seen in the collection use the floor cf/C -> 1/(2C) so unseen
    terms stay strictly worse than any seen term without reaching -inf.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    terms = _query_terms(query_text)
    c = index.collection_length
    dl = index.doc_lengths[doc_id]
    total = 0.0
    for t in terms:
        cf = index.cf(t)
        if c == 0:
            p_coll = 1.0  # degenerate all-empty corpus: every doc scores 0
        elif cf > 0:
            p_coll = cf / c
        else:
            p_coll = 1.0 / (2.0 * c)
        total += math.log((index.tf(t, doc_id) + mu * p_coll) / (dl + mu))
    return total


def score_bm25(
    query_text: str,
    doc_id: str,
    index: InvertedIndex,
    k1: float = DEFAULT_K1,
    b: float = DEFAULT_B,
) -> float:
    """Okapi BM25 with idf = ln(1 + (N - df + 0.5)/(df + 0.5)).

    Query tokens absent from the collection (df = 0) contribute 0.
    """
    if k1 < 0 or not 0.0 <= b <= 1.0:
        raise ValueError("require k1 >= 0 and 0 <= b <= 1")
    terms = _query_terms(query_text)
    n = index.doc_count
    avgdl = index.avg_doc_length
    dl = index.doc_lengths[doc_id]
    total = 0.0
    for t in terms:
        df = index.df(t)
        if df == 0:
            continue
        tf = index.tf(t, doc_id)
        if tf == 0:
            continue
        idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
        total += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl))
    return total


def retrieve(query: Query, index: InvertedIndex, params: RetrievalParams) -> list[RunEntry]:
    """Score candidates and return the top_k as ranked run entries.

    Ties break by ascending doc_id; ranks are assigned 1..n.
    """
    if index.doc_count == 0:
        return []
    terms = _query_terms(query.text)
    if params.model == "bm25":
        candidates = sorted({did for t in set(terms) for did, _ in index.postings.get(t, [])})
        scores = [(score_bm25(query.text, d, index, params.k1, params.b), d) for d in candidates]
    else:
        candidates = index.doc_ids()
        scores = [(score_ql(query.text, d, index, params.mu), d) for d in candidates]
    scores.sort(key=lambda pair: (-pair[0], pair[1]))
    top = scores[: params.top_k]
    return [
        RunEntry(query_id=query.id, doc_id=did, rank=i + 1, score=s, tag="telerank")
        for i, (s, did) in enumerate(top)
    ]


def retrieve_all(
    queries: list[Query],
    index: InvertedIndex,
    params: RetrievalParams,
    tag: str = "telerank",
) -> list[RunEntry]:
    entries: list[RunEntry] = []
    for q in queries:
        for e in retrieve(q, index, params):
            entries.append(RunEntry(e.query_id, e.doc_id, e.rank, e.score, tag))
    return entries


# ---------------------------------------------------------------------------
# Snapshot


def save_index(index: InvertedIndex, path: str) -> None:
    import json

    payload = json.dumps({
        "postings": {t: [[d, tf] for d, tf in p] for t, p in index.postings.items()},
        "doc_lengths": index.doc_lengths,
        "collection_length": index.collection_length,
        "doc_count": index.doc_count,
    }, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_SNAPSHOT_MAGIC)
        f.write(struct.pack("<I", _SNAPSHOT_VERSION))
        f.write(struct.pack("<Q", len(payload)))
        f.write(payload)


def load_index(path: str) -> InvertedIndex:
    import json

    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != _SNAPSHOT_MAGIC:
            raise SnapshotVersionMismatch(f"{path}: not an index snapshot (magic {magic!r})")
        (version,) = struct.unpack("<I", f.read(4))
        if version != _SNAPSHOT_VERSION:
            raise SnapshotVersionMismatch(
                f"{path}: snapshot version {version}, this build reads {_SNAPSHOT_VERSION}"
            )
        (length,) = struct.unpack("<Q", f.read(8))
        payload = json.loads(f.read(length).decode("utf-8"))
    return InvertedIndex(
        postings={t: [(d, tf) for d, tf in p] for t, p in payload["postings"].items()},
        doc_lengths=payload["doc_lengths"],
        collection_length=payload["collection_length"],
        doc_count=payload["doc_count"],
    )
