"""Label transfer, balanced sampling, and the leakage gate."""

import random

import pytest

from telerank.chunking import Passage
from telerank.corpus import Qrels, Query, RunEntry, make_folds
from telerank.errors import LeakageDetected, MissingScorer
from telerank.labeling import (
    LabelingPolicy,
    candidates_from_run,
    enforce_split_hygiene,
    label_passages,
    sample_negatives,
)
from telerank.scoring import OracleScorer, Scorer


class FixedScorer(Scorer):
    """Returns preset scores keyed by (query_id, doc_id, passage_index)."""

    def __init__(self, scores):
        self.scores = scores

    def score_batch(self, query, passages):
        return [self.scores.get((query.id, p.doc_id, p.index), 0.0) for p in passages]


def _passages(doc_id, n):
    return [
        Passage(doc_id=doc_id, index=i, start=i * 10, end=(i + 1) * 10, text=f"{doc_id} body {i}")
        for i in range(n)
    ]


def _setup():
    queries = [Query("q1", "first query")]
    candidates = {"q1": ["d_rel", "d_non"]}
    passages = {"d_rel": _passages("d_rel", 2), "d_non": _passages("d_non", 3)}
    qrels = Qrels({("q1", "d_rel"): 1, ("q1", "d_non"): 0})
    return queries, candidates, passages, qrels


class TestLabelPassages:
    def test_teacher_keeps_passing_discards_failing(self):
        queries, candidates, passages, qrels = _setup()
        scorer = FixedScorer({("q1", "d_rel", 0): 0.9, ("q1", "d_rel", 1): 0.2})
        pool = label_passages(queries, candidates, passages, qrels,
                              LabelingPolicy(kind="teacher", tau=0.5), scorer)
        assert [(i.doc_id, i.passage_index) for i in pool.positives] == [("d_rel", 0)]
        assert pool.stats.n_discarded == 1
        # discarded passage is not a negative either
        assert all(i.doc_id == "d_non" for i in pool.negative_candidates)

    def test_doc_transfer_takes_every_passage(self):
        queries, candidates, passages, qrels = _setup()
        pool = label_passages(queries, candidates, passages, qrels,
                              LabelingPolicy(kind="doc_transfer"))
        assert [(i.doc_id, i.passage_index) for i in pool.positives] == [
            ("d_rel", 0), ("d_rel", 1),
        ]
        assert pool.stats.n_discarded == 0

    def test_all_below_threshold_yields_no_positives(self):
        queries, candidates, passages, qrels = _setup()
        scorer = FixedScorer({})  # every score 0.0
        pool = label_passages(queries, candidates, passages, qrels,
                              LabelingPolicy(kind="teacher", tau=0.5), scorer)
        assert pool.positives == []
        assert pool.stats.n_discarded == 2

    def test_negatives_come_from_nonrelevant_candidates(self):
        queries, candidates, passages, qrels = _setup()
        pool = label_passages(queries, candidates, passages, qrels,
                              LabelingPolicy(kind="doc_transfer"))
        assert {(i.doc_id, i.passage_index) for i in pool.negative_candidates} == {
            ("d_non", 0), ("d_non", 1), ("d_non", 2),
        }
        assert all(i.label == "negative" for i in pool.negative_candidates)

    def test_teacher_requires_scorer(self):
        queries, candidates, passages, qrels = _setup()
        with pytest.raises(MissingScorer):
            label_passages(queries, candidates, passages, qrels,
                           LabelingPolicy(kind="teacher"))

    def test_teacher_positives_subset_of_doc_transfer(self):
        rng = random.Random(31)
        queries = [Query(f"q{i}", f"query {i}") for i in range(5)]
        candidates = {}
        passages = {}
        judgments = {}
        oracle_marks = set()
        for q in queries:
            docs = []
            for d in range(6):
                did = f"{q.id}_d{d}"
                docs.append(did)
                passages[did] = _passages(did, rng.randint(1, 4))
                grade = rng.choice([0, 0, 1, 2])
                judgments[(q.id, did)] = grade
                if grade > 0:
                    for p in passages[did]:
                        if rng.random() < 0.5:
                            oracle_marks.add((q.id, did, p.index))
            candidates[q.id] = docs
        qrels = Qrels(judgments)
        teacher_pool = label_passages(queries, candidates, passages, qrels,
                                      LabelingPolicy(kind="teacher", tau=0.5),
                                      OracleScorer(oracle_marks))
        transfer_pool = label_passages(queries, candidates, passages, qrels,
                                       LabelingPolicy(kind="doc_transfer"))
        teacher_keys = {i.sort_key() for i in teacher_pool.positives}
        transfer_keys = {i.sort_key() for i in transfer_pool.positives}
        assert teacher_keys <= transfer_keys
        # every positive's document is relevant
        for inst in teacher_pool.positives + transfer_pool.positives:
            assert qrels.grade(inst.query_id, inst.doc_id) > 0

    def test_provenance_recorded(self):
        queries, candidates, passages, qrels = _setup()
        pool = label_passages(queries, candidates, passages, qrels,
                              LabelingPolicy(kind="doc_transfer"))
        assert {i.provenance for i in pool.positives} == {"doc_transfer"}

    def test_parallel_scoring_is_deterministic(self):
        rng = random.Random(13)
        queries = [Query(f"q{i}", f"query {i}") for i in range(6)]
        candidates = {q.id: [f"{q.id}_d{d}" for d in range(4)] for q in queries}
        passages = {d: _passages(d, 3) for docs in candidates.values() for d in docs}
        judgments = {(q.id, d): rng.choice([0, 1]) for q in queries for d in candidates[q.id]}
        qrels = Qrels(judgments)
        marks = {
            (q.id, d, 0) for q in queries for d in candidates[q.id]
            if judgments[(q.id, d)] > 0
        }
        policy = LabelingPolicy(kind="teacher", tau=0.5)
        one = label_passages(queries, candidates, passages, qrels, policy,
                             OracleScorer(marks), threads=1)
        eight = label_passages(queries, candidates, passages, qrels, policy,
                               OracleScorer(marks), threads=8)
        assert one.positives == eight.positives
        assert one.negative_candidates == eight.negative_candidates


class TestSampleNegatives:
    def _pool(self, n_pos, n_neg):
        queries = [Query("q1", "query")]
        candidates = {"q1": ["d_rel", "d_non"]}
        passages = {"d_rel": _passages("d_rel", n_pos), "d_non": _passages("d_non", n_neg)}
        qrels = Qrels({("q1", "d_rel"): 2, ("q1", "d_non"): 0})
        return label_passages(queries, candidates, passages, qrels,
                              LabelingPolicy(kind="doc_transfer"))

    def test_balanced(self):
        training = sample_negatives(self._pool(5, 100), seed=4)
        assert len(training.positives()) == 5
        assert len(training.negatives()) == 5
        assert training.shortfalls == {}

    def test_shortfall_recorded(self):
        training = sample_negatives(self._pool(5, 3), seed=4)
        assert len(training.negatives()) == 3
        assert training.shortfalls == {"q1": 2}

    def test_no_positives_no_output(self):
        queries = [Query("q1", "query")]
        candidates = {"q1": ["d_non"]}
        passages = {"d_non": _passages("d_non", 4)}
        qrels = Qrels({("q1", "d_non"): 0})
        pool = label_passages(queries, candidates, passages, qrels,
                              LabelingPolicy(kind="doc_transfer"))
        training = sample_negatives(pool, seed=4)
        assert training.instances == []

    def test_deterministic_per_seed(self):
        pool = self._pool(5, 100)
        a = sample_negatives(pool, seed=4)
        b = sample_negatives(pool, seed=4)
        c = sample_negatives(pool, seed=5)
        assert a.instances == b.instances
        assert a.instances != c.instances

    def test_draw_without_replacement(self):
        training = sample_negatives(self._pool(8, 20), seed=1)
        keys = [i.sort_key() for i in training.negatives()]
        assert len(keys) == len(set(keys)) == 8


class TestSplitHygiene:
    def _instances(self, qids):
        return [
            label_passages(
                [Query(qid, "q")], {qid: ["d1"]}, {"d1": _passages("d1", 1)},
                Qrels({(qid, "d1"): 1}), LabelingPolicy(kind="doc_transfer"),
            ).positives[0]
            for qid in qids
        ]

    def test_test_fold_query_rejected(self):
        spec = make_folds([f"q{i}" for i in range(10)], k=5, seed=1)
        test_qid = next(iter(spec.test_queries(0)))
        with pytest.raises(LeakageDetected) as exc:
            enforce_split_hygiene(spec, 0, self._instances([test_qid]))
        assert test_qid in exc.value.query_ids

    def test_train_and_validation_pass(self):
        spec = make_folds([f"q{i}" for i in range(10)], k=5, seed=1)
        allowed = sorted(spec.train_queries(0) | spec.validation_queries(0))
        counts = enforce_split_hygiene(spec, 0, self._instances(allowed))
        assert sum(counts.values()) == len(allowed)
        assert counts[spec.rounds[0].test] == 0

    def test_doc_transfer_instances_also_gated(self):
        spec = make_folds([f"q{i}" for i in range(10)], k=5, seed=1)
        test_qid = next(iter(spec.test_queries(2)))
        instances = self._instances([test_qid])
        assert instances[0].provenance == "doc_transfer"
        with pytest.raises(LeakageDetected):
            enforce_split_hygiene(spec, 2, instances)


def test_candidates_from_run():
    entries = [
        RunEntry("q1", "d2", 2, 0.5, "t"),
        RunEntry("q1", "d1", 1, 0.9, "t"),
        RunEntry("q2", "d3", 1, 0.7, "t"),
    ]
    assert candidates_from_run(entries) == {"q1": ["d1", "d2"], "q2": ["d3"]}


def test_policy_validation():
    with pytest.raises(ValueError):
        LabelingPolicy(kind="student")
    with pytest.raises(ValueError):
        LabelingPolicy(kind="teacher", tau=1.0)
