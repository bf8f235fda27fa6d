"""Passage-level training-set construction.

Two labeling policies over the first-stage candidates of each query:

* teacher: passages of relevant documents (qrels grade > 0) are scored
  by a teacher scorer and kept as positives only when the binarized
  score passes tau; rejected passages of relevant documents are
  discarded entirely, never used as negatives.
* doc_transfer: every passage of every relevant document becomes a
  positive (the label-noise baseline).

In both policies every passage of a retrieved non-relevant (grade 0 or
unjudged) document is a negative candidate; balanced training sets then
draw, per query, as many negatives as positives, uniformly without
replacement, from that query's candidates. Hard negatives only: all
candidates come from the first-stage run, not from the wider corpus.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import hashlib
import random

from .chunking import Passage
from .corpus import FoldSpec, Qrels, Query, RunEntry, TrainingInstance
from .errors import LeakageDetected, MissingScorer
from .scoring import DEFAULT_TAU, Scorer, ScorerPool, binarize

POLICY_KINDS = ("teacher", "doc_transfer")


@dataclass(frozen=True)
class LabelingPolicy:
    kind: str = "teacher"
    tau: float = DEFAULT_TAU
    seed: int = 123

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown labeling policy {self.kind!r}")
        if self.kind == "teacher" and not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")


@dataclass
class PoolStats:
    n_positives: int = 0
    n_negative_candidates: int = 0
    n_discarded: int = 0          # teacher-rejected passages of relevant docs
    by_provenance: dict[str, int] = field(default_factory=dict)


@dataclass
class LabeledPool:
    positives: list[TrainingInstance]
    negative_candidates: list[TrainingInstance]
    stats: PoolStats

    def positives_for(self, query_id: str) -> list[TrainingInstance]:
        return [i for i in self.positives if i.query_id == query_id]

    def negatives_for(self, query_id: str) -> list[TrainingInstance]:
        return [i for i in self.negative_candidates if i.query_id == query_id]

    def query_ids(self) -> list[str]:
        return sorted({i.query_id for i in self.positives + self.negative_candidates})


def candidates_from_run(entries: list[RunEntry]) -> dict[str, list[str]]:
    """First-stage candidate doc ids per query, in rank order."""
    by_query: dict[str, list[tuple[int, str]]] = {}
    for e in entries:
        by_query.setdefault(e.query_id, []).append((e.rank, e.doc_id))
    return {qid: [d for _, d in sorted(pairs)] for qid, pairs in by_query.items()}


def label_passages(
    queries: list[Query],
    candidates_by_query: dict[str, list[str]],
    passages_by_doc: dict[str, list[Passage]],
    qrels: Qrels,
    policy: LabelingPolicy,
    scorer: Scorer | ScorerPool | None = None,
    threads: int = 1,
) -> LabeledPool:
    """Label every passage of every retrieved document for each query.

    Output ordering is canonical (query_id, doc_id, passage_index)
    regardless of scoring parallelism.
    """
    if policy.kind == "teacher" and scorer is None:
        raise MissingScorer("teacher labeling requires a scorer")
    pool = scorer if isinstance(scorer, ScorerPool) else (
        ScorerPool([scorer]) if scorer is not None else None
    )

    queries = sorted(queries, key=lambda q: q.id)
    rel_tasks: list[tuple[Query, list[Passage]]] = []
    if policy.kind == "teacher":
        for q in queries:
            for did in sorted(candidates_by_query.get(q.id, [])):
                if qrels.grade(q.id, did) > 0:
                    rel_tasks.append((q, passages_by_doc.get(did, [])))
        scores = pool.score_tasks(rel_tasks, threads=threads)
        teacher_verdicts = {
            (q.id, ps[0].doc_id): s
            for (q, ps), s in zip(rel_tasks, scores)
            if ps
        }

    positives: list[TrainingInstance] = []
    negatives: list[TrainingInstance] = []
    stats = PoolStats(by_provenance={policy.kind: 0})

    for q in queries:
        for did in sorted(set(candidates_by_query.get(q.id, []))):
            doc_passages = passages_by_doc.get(did, [])
            relevant_doc = qrels.grade(q.id, did) > 0
            if relevant_doc:
                doc_scores = teacher_verdicts.get((q.id, did)) if policy.kind == "teacher" else None
                for j, p in enumerate(doc_passages):
                    if policy.kind == "teacher" and not binarize(doc_scores[j], policy.tau):
                        stats.n_discarded += 1
                        continue
                    positives.append(_instance(q, p, "positive", policy.kind))
            else:
                for p in doc_passages:
                    negatives.append(_instance(q, p, "negative", policy.kind))

    positives.sort(key=TrainingInstance.sort_key)
    negatives.sort(key=TrainingInstance.sort_key)
    stats.n_positives = len(positives)
    stats.n_negative_candidates = len(negatives)
    stats.by_provenance[policy.kind] = len(positives) + len(negatives)
    return LabeledPool(positives=positives, negative_candidates=negatives, stats=stats)


def _instance(q: Query, p: Passage, label: str, provenance: str) -> TrainingInstance:
    return TrainingInstance(
        query_id=q.id,
        doc_id=p.doc_id,
        passage_index=p.index,
        query_text=q.text,
        passage_text=p.text,
        label=label,
        provenance=provenance,
    )


@dataclass
class TrainingSet:
    instances: list[TrainingInstance]
    shortfalls: dict[str, int] = field(default_factory=dict)

    def positives(self) -> list[TrainingInstance]:
        return [i for i in self.instances if i.label == "positive"]

    def negatives(self) -> list[TrainingInstance]:
        return [i for i in self.instances if i.label == "negative"]


def sample_negatives(pool: LabeledPool, seed: int = 123) -> TrainingSet:
    """Per query, draw |positives| negatives uniformly without replacement.

    Queries with zero positives are excluded. When a query has too few
    candidates all of them are taken and the shortfall recorded. The draw
    is seeded per query, so results do not depend on query order.
    """
    instances: list[TrainingInstance] = []
    shortfalls: dict[str, int] = {}
    pos_by_query: dict[str, list[TrainingInstance]] = {}
    for inst in pool.positives:
        pos_by_query.setdefault(inst.query_id, []).append(inst)
    neg_by_query: dict[str, list[TrainingInstance]] = {}
    for inst in pool.negative_candidates:
        neg_by_query.setdefault(inst.query_id, []).append(inst)

    for qid in sorted(pos_by_query):
        pos = pos_by_query[qid]
        candidates = sorted(neg_by_query.get(qid, []), key=TrainingInstance.sort_key)
        want = len(pos)
        if len(candidates) <= want:
            drawn = candidates
            if len(candidates) < want:
                shortfalls[qid] = want - len(candidates)
        else:
            digest = hashlib.sha256(f"{seed}|{qid}".encode("utf-8")).digest()
            rng = random.Random(int.from_bytes(digest[:8], "big"))
            drawn = rng.sample(candidates, want)
        instances.extend(pos)
        instances.extend(drawn)

    instances.sort(key=TrainingInstance.sort_key)
    return TrainingSet(instances=instances, shortfalls=shortfalls)


def enforce_split_hygiene(
    fold_spec: FoldSpec,
    round_index: int,
    instances: list[TrainingInstance],
) -> dict[int, int]:
    """Hard gate: no training instance may come from a test-fold query.

    Applies to every labeling policy (teacher output must never touch
    test queries, and document-transferred labels from test queries are
    equally off limits). Returns per-fold instance counts on success.
    """
    test_queries = fold_spec.test_queries(round_index)
    offending = {i.query_id for i in instances if i.query_id in test_queries}
    if offending:
        raise LeakageDetected(offending)
    counts: dict[int, int] = {i: 0 for i in range(fold_spec.k)}
    for inst in instances:
        counts[fold_spec.fold_of(inst.query_id)] += 1
    return counts
