"""Inverted index, QL/BM25 scoring, retrieval, and snapshots.

The brute-force oracle in this file recomputes both scoring formulas
from raw token counts, independent of the index implementation.
"""

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from telerank.corpus import Document, Query
from telerank.errors import EmptyQuery, SnapshotVersionMismatch
from telerank.index import (
    RetrievalParams,
    build_index,
    load_index,
    retrieve,
    save_index,
    score_bm25,
    score_ql,
)
from telerank.textproc import tokenize


def _toy_index():
    return build_index([
        Document(id="d1", body="a b a"),
        Document(id="d2", body="b c"),
    ])


# ---------------------------------------------------------------------------
# Brute-force oracle: direct formula evaluation from token counts


def _counts(documents):
    toks = {d.id: [t.text for t in tokenize(f"{d.title} {d.body}" if d.title else d.body)]
            for d in documents}
    return toks


def oracle_ql(query_text, doc_id, documents, mu):
    toks = _counts(documents)
    c = sum(len(v) for v in toks.values())
    dl = len(toks[doc_id])
    score = 0.0
    for term in [t.text for t in tokenize(query_text)]:
        cf = sum(v.count(term) for v in toks.values())
        p = cf / c if cf > 0 else 1.0 / (2.0 * c)
        score += math.log((toks[doc_id].count(term) + mu * p) / (dl + mu))
    return score


def oracle_bm25(query_text, doc_id, documents, k1, b):
    toks = _counts(documents)
    n = len(documents)
    avgdl = sum(len(v) for v in toks.values()) / n
    dl = len(toks[doc_id])
    score = 0.0
    for term in [t.text for t in tokenize(query_text)]:
        df = sum(1 for v in toks.values() if term in v)
        tf = toks[doc_id].count(term)
        if df == 0 or tf == 0:
            continue
        idf = math.log(1 + (n - df + 0.5) / (df + 0.5))
        score += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))
    return score


# ---------------------------------------------------------------------------


class TestBuildIndex:
    def test_counting(self):
        idx = _toy_index()
        assert idx.collection_length == 5
        assert idx.df("b") == 2
        assert idx.tf("a", "d1") == 2
        assert idx.doc_count == 2

    def test_empty_corpus(self):
        idx = build_index([])
        assert idx.doc_count == 0
        assert retrieve(Query("q", "anything"), idx, RetrievalParams()) == []

    def test_title_prepended(self):
        idx = build_index([Document(id="d", body="", title="x")])
        assert idx.doc_lengths["d"] == 1
        assert idx.tf("x", "d") == 1

    def test_postings_sorted_by_doc_id(self):
        idx = build_index([
            Document(id="z", body="t"), Document(id="a", body="t"), Document(id="m", body="t"),
        ])
        assert [d for d, _ in idx.postings["t"]] == ["a", "m", "z"]


class TestScoreQL:
    def test_derived_value(self):
        # cf(a)/5 = 0.4, |d1| = 3, mu = 1 -> log(2.4 / 4)
        idx = _toy_index()
        assert score_ql("a", "d1", idx, mu=1.0) == pytest.approx(math.log(0.6), abs=1e-12)
        assert score_ql("a", "d1", idx, mu=1.0) == pytest.approx(-0.5108, abs=1e-4)

    def test_term_additivity(self):
        idx = _toy_index()
        assert score_ql("a a", "d1", idx, mu=1.0) == pytest.approx(
            2 * score_ql("a", "d1", idx, mu=1.0), abs=1e-12,
        )

    def test_empty_query(self):
        with pytest.raises(EmptyQuery):
            score_ql("", "d1", _toy_index(), mu=1.0)

    def test_unseen_term_floor_is_finite_and_worst(self):
        idx = _toy_index()
        unseen = score_ql("zzz", "d1", idx, mu=1.0)
        assert math.isfinite(unseen)
        for seen in ("a", "b", "c"):
            for did in ("d1", "d2"):
                assert score_ql(seen, did, idx, mu=1.0) > unseen


class TestScoreBM25:
    def test_derived_value(self):
        # N=2, df=1, tf=1, |d|=3, avgdl=2.5 -> idf = ln 2, tf part ~ 0.9635
        idx = _toy_index()
        got = score_bm25("c", "d2", idx, k1=0.9, b=0.4)
        # for d2: tf=1, |d|=2: direct evaluation
        want = math.log(2) * 1.9 / (1 + 0.9 * (1 - 0.4 + 0.4 * 2 / 2.5))
        assert got == pytest.approx(want, abs=1e-12)
        # spec-shaped variant: a hypothetical |d|=3 document
        idx2 = build_index([Document(id="d1", body="c x x"), Document(id="d2", body="y z")])
        got2 = score_bm25("c", "d1", idx2, k1=0.9, b=0.4)
        assert got2 == pytest.approx(0.6679, abs=1e-4)

    def test_absent_term_contributes_zero(self):
        idx = _toy_index()
        assert score_bm25("zzz", "d1", idx) == 0.0
        both = score_bm25("a zzz", "d1", idx)
        assert both == pytest.approx(score_bm25("a", "d1", idx), abs=1e-12)

    def test_b_zero_ignores_length(self):
        docs = [Document(id="short", body="t"), Document(id="long", body="t " + "x " * 50)]
        idx = build_index(docs)
        assert score_bm25("t", "short", idx, k1=0.9, b=0.0) == pytest.approx(
            score_bm25("t", "long", idx, k1=0.9, b=0.0), abs=1e-12,
        )

    def test_monotone_in_tf(self):
        docs = [Document(id=f"d{i}", body="t " * (i + 1) + "pad " * 5) for i in range(4)]
        idx = build_index(docs)
        scores = [score_bm25("t", f"d{i}", idx) for i in range(4)]
        # same length after padding differences; rebuild with equal lengths
        docs = [Document(id=f"d{i}", body="t " * (i + 1) + "pad " * (5 - i)) for i in range(4)]
        idx = build_index(docs)
        scores = [score_bm25("t", f"d{i}", idx) for i in range(4)]
        assert scores == sorted(scores)


class TestRetrieve:
    def test_shorter_doc_wins_on_tie_tf(self):
        idx = _toy_index()
        entries = retrieve(Query("q", "b"), idx, RetrievalParams(model="bm25", top_k=2))
        assert [e.doc_id for e in entries] == ["d2", "d1"]
        assert [e.rank for e in entries] == [1, 2]

    def test_top_k_one(self):
        idx = _toy_index()
        assert len(retrieve(Query("q", "b"), idx, RetrievalParams(model="bm25", top_k=1))) == 1

    def test_tie_breaks_by_doc_id(self):
        docs = [Document(id=i, body="same text here") for i in ("db", "da", "dc")]
        idx = build_index(docs)
        entries = retrieve(Query("q", "same"), idx, RetrievalParams(model="bm25", top_k=3))
        assert [e.doc_id for e in entries] == ["da", "db", "dc"]

    def test_bm25_candidates_need_a_matching_term(self):
        idx = _toy_index()
        entries = retrieve(Query("q", "c"), idx, RetrievalParams(model="bm25", top_k=10))
        assert [e.doc_id for e in entries] == ["d2"]

    def test_ql_scores_all_documents(self):
        idx = _toy_index()
        entries = retrieve(Query("q", "c"), idx, RetrievalParams(model="ql", top_k=10))
        assert len(entries) == 2


def _random_corpus(rng, max_docs=50, max_terms=30):
    vocab = [f"t{i}" for i in range(rng.randint(2, max_terms))]
    docs = []
    for i in range(rng.randint(1, max_docs)):
        length = rng.randint(0, 40)
        docs.append(Document(
            id=f"d{i:03d}",
            body=" ".join(rng.choice(vocab) for _ in range(length)),
        ))
    return docs, vocab


def test_retrieval_matches_brute_force_oracle():
    """Order equals brute-force sort and scores match the direct formulas."""
    rng = random.Random(20240817)
    for trial in range(50):
        docs, vocab = _random_corpus(rng)
        idx = build_index(docs)
        if idx.collection_length == 0:
            continue
        query_text = " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 4)))
        query = Query("q", query_text)

        params_ql = RetrievalParams(model="ql", mu=rng.choice([1.0, 10.0, 2500.0]), top_k=len(docs))
        got = retrieve(query, idx, params_ql)
        want = sorted(
            ((score_ql(query_text, d.id, idx, params_ql.mu), d.id) for d in docs),
            key=lambda p: (-p[0], p[1]),
        )
        assert [e.doc_id for e in got] == [d for _, d in want]
        for e in got:
            assert e.score == pytest.approx(
                oracle_ql(query_text, e.doc_id, docs, params_ql.mu), abs=1e-9,
            )

        params_bm = RetrievalParams(model="bm25", k1=0.9, b=0.4, top_k=len(docs))
        got = retrieve(query, idx, params_bm)
        matching = {
            d.id for d in docs
            if any(idx.tf(t.text, d.id) for t in tokenize(query_text))
        }
        want = sorted(
            ((score_bm25(query_text, did, idx, 0.9, 0.4), did) for did in matching),
            key=lambda p: (-p[0], p[1]),
        )
        assert [e.doc_id for e in got] == [d for _, d in want]
        for e in got:
            assert e.score == pytest.approx(
                oracle_bm25(query_text, e.doc_id, docs, 0.9, 0.4), abs=1e-9,
            )


@given(st.data())
@settings(max_examples=60, deadline=None)
def test_ql_additivity_property(data):
    rng = random.Random(data.draw(st.integers(0, 2**20)))
    docs, vocab = _random_corpus(rng, max_docs=10, max_terms=8)
    idx = build_index(docs)
    if idx.collection_length == 0:
        return
    q1 = " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 3)))
    q2 = " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 3)))
    doc = rng.choice(docs).id
    assert score_ql(f"{q1} {q2}", doc, idx, mu=100.0) == pytest.approx(
        score_ql(q1, doc, idx, mu=100.0) + score_ql(q2, doc, idx, mu=100.0), abs=1e-9,
    )


class TestSnapshot:
    def test_round_trip(self, tmp_path):
        idx = _toy_index()
        path = str(tmp_path / "idx.bin")
        save_index(idx, path)
        loaded = load_index(path)
        assert loaded.postings == idx.postings
        assert loaded.doc_lengths == idx.doc_lengths
        assert loaded.collection_length == idx.collection_length
        assert loaded.doc_count == idx.doc_count

    def test_rejects_bad_magic(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOTANIDX" + b"\x00" * 16)
        with pytest.raises(SnapshotVersionMismatch):
            load_index(str(path))

    def test_rejects_version_mismatch(self, tmp_path):
        idx = _toy_index()
        path = tmp_path / "idx.bin"
        save_index(idx, str(path))
        blob = bytearray(path.read_bytes())
        blob[8] = 99  # bump the little-endian version field
        path.write_bytes(bytes(blob))
        with pytest.raises(SnapshotVersionMismatch):
            load_index(str(path))


def test_invalid_params_rejected():
    with pytest.raises(ValueError):
        RetrievalParams(model="ql", mu=0.0)
    with pytest.raises(ValueError):
        RetrievalParams(model="bm25", b=1.5)
    with pytest.raises(ValueError):
        RetrievalParams(top_k=0)
    with pytest.raises(ValueError):
        RetrievalParams(model="vector")
