"""Document scores from passage scores, and run-file reranking.

Strategies: first (score of passage 0), max (best passage), sum, avg,
and interp (alpha-weighted mix of the per-query min-max-normalized
first-stage score with the mean of the top-k passage scores). Documents
that produced no passages rank last within their query, ordered by id.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .corpus import Qrels, RunEntry, run_by_query
from .errors import MalformedRecord, MissingFirstStageScore, NoPassages

STRATEGY_KINDS = ("first_p", "max_p", "sum_p", "avg_p", "interp_topk")

_CLI_NAMES = {
    "firstp": "first_p",
    "maxp": "max_p",
    "sump": "sum_p",
    "avgp": "avg_p",
    "interp": "interp_topk",
}

DEFAULT_INTERP_K = 3
ALPHA_GRID = [round(0.1 * i, 1) for i in range(11)]


@dataclass(frozen=True)
class AggregationStrategy:
    kind: str = "max_p"
    k: int = DEFAULT_INTERP_K          # interp_topk only
    alpha: float = 0.5                 # interp_topk only

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown aggregation strategy {self.kind!r}")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")

    @classmethod
    def from_name(cls, name: str, k: int = DEFAULT_INTERP_K, alpha: float = 0.5):
        kind = _CLI_NAMES.get(name, name)
        return cls(kind=kind, k=k, alpha=alpha)


@dataclass(frozen=True)
class DocumentScore:
    query_id: str
    doc_id: str
    value: float
    n_passages: int


def aggregate_scores(
    scores: list[float],
    strategy: AggregationStrategy,
    first_stage_score: float | None = None,
) -> float:
    """Aggregate one document's ordered passage scores into one value."""
    if not scores:
        raise NoPassages("cannot aggregate an empty passage-score sequence")
    if strategy.kind == "first_p":
        return scores[0]
    if strategy.kind == "max_p":
        return max(scores)
    if strategy.kind == "sum_p":
        return math.fsum(scores)
    if strategy.kind == "avg_p":
        return math.fsum(scores) / len(scores)
    if first_stage_score is None:
        raise MissingFirstStageScore("interp_topk needs the normalized first-stage score")
    top = sorted(scores, reverse=True)[: strategy.k]
    semantic = math.fsum(top) / len(top)
    return strategy.alpha * first_stage_score + (1.0 - strategy.alpha) * semantic


# ---------------------------------------------------------------------------
# Passage-score files: one JSON object per line
# {"query_id": ..., "doc_id": ..., "passage_index": ..., "score": ...}


PassageScores = dict[tuple[str, str], list[float]]


def load_passage_scores(path: str) -> PassageScores:
    raw: dict[tuple[str, str], dict[int, float]] = {}
    with open(path, encoding="utf-8") as f:
        for no, line in enumerate(f.read().splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedRecord(path, no, f"invalid JSON: {e.msg}") from e
            try:
                key = (str(obj["query_id"]), str(obj["doc_id"]))
                raw.setdefault(key, {})[int(obj["passage_index"])] = float(obj["score"])
            except (KeyError, TypeError, ValueError):
                raise MalformedRecord(
                    path, no, "need query_id, doc_id, passage_index, score"
                ) from None
    out: PassageScores = {}
    for key, by_index in raw.items():
        indices = sorted(by_index)
        if indices != list(range(len(indices))):
            raise MalformedRecord(
                path, 0, f"passage indices for {key} are not consecutive from 0: {indices}"
            )
        out[key] = [by_index[i] for i in indices]
    return out


def write_passage_scores(scores: PassageScores, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for (qid, did) in sorted(scores):
            for i, s in enumerate(scores[(qid, did)]):
                f.write(json.dumps({
                    "query_id": qid, "doc_id": did, "passage_index": i,
                    "score": round(s, 12),
                }, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Reranking


def _normalize_first_stage(entries: list[RunEntry], mode: str) -> dict[str, float]:
    values = [e.score for e in entries]
    if mode == "minmax":
        lo, hi = min(values), max(values)
        if hi == lo:
            return {e.doc_id: 0.5 for e in entries}
        return {e.doc_id: (e.score - lo) / (hi - lo) for e in entries}
    if mode == "zscore":
        n = len(values)
        mean = math.fsum(values) / n
        var = math.fsum((v - mean) ** 2 for v in values) / n
        std = math.sqrt(var)
        if std == 0.0:
            return {e.doc_id: 0.0 for e in entries}
        return {e.doc_id: (e.score - mean) / std for e in entries}
    raise ValueError(f"unknown first-stage normalization {mode!r}")


def rerank(
    first_stage_run: list[RunEntry],
    passage_scores: PassageScores,
    strategy: AggregationStrategy,
    tag: str = "telerank",
    interp_norm: str = "minmax",
) -> list[RunEntry]:
    """Reorder every query's candidates by aggregated document score.

    Ties break by ascending doc_id. Candidates without passages share a
    sentinel below the lowest real score and therefore rank last.
    """
    out: list[RunEntry] = []
    for qid, entries in run_by_query(first_stage_run).items():
        norm = (
            _normalize_first_stage(entries, interp_norm)
            if strategy.kind == "interp_topk" else None
        )
        scored: list[tuple[float, str, int]] = []
        empty: list[str] = []
        for e in entries:
            scores = passage_scores.get((qid, e.doc_id), [])
            if not scores:
                empty.append(e.doc_id)
                continue
            fs = norm[e.doc_id] if norm is not None else None
            scored.append((aggregate_scores(scores, strategy, fs), e.doc_id, len(scores)))
        scored.sort(key=lambda t: (-t[0], t[1]))
        sentinel = (min(v for v, _, _ in scored) - 1.0) if scored else 0.0
        ranked = [(v, d) for v, d, _ in scored] + [(sentinel, d) for d in sorted(empty)]
        for rank, (value, did) in enumerate(ranked, start=1):
            out.append(RunEntry(qid, did, rank, value, tag))
    return out


def document_scores(
    first_stage_run: list[RunEntry],
    passage_scores: PassageScores,
    strategy: AggregationStrategy,
    interp_norm: str = "minmax",
) -> list[DocumentScore]:
    """Aggregated per-document scores without reassigning ranks."""
    out = []
    for qid, entries in run_by_query(first_stage_run).items():
        norm = (
            _normalize_first_stage(entries, interp_norm)
            if strategy.kind == "interp_topk" else None
        )
        for e in entries:
            scores = passage_scores.get((qid, e.doc_id), [])
            if not scores:
                continue
            fs = norm[e.doc_id] if norm is not None else None
            out.append(DocumentScore(
                query_id=qid,
                doc_id=e.doc_id,
                value=aggregate_scores(scores, strategy, fs),
                n_passages=len(scores),
            ))
    return out


def fit_interpolation_alpha(
    first_stage_run: list[RunEntry],
    passage_scores: PassageScores,
    qrels: Qrels,
    query_ids: set[str] | None = None,
    k: int = DEFAULT_INTERP_K,
    interp_norm: str = "minmax",
    grid: list[float] | None = None,
) -> float:
    """Grid-search alpha maximizing MAP on the given (validation) queries.

    Ties prefer the smaller alpha so the choice is deterministic.
    """
    from .metrics import average_precision

    run = first_stage_run
    if query_ids is not None:
        run = [e for e in first_stage_run if e.query_id in query_ids]
    best_alpha, best_map = None, -1.0
    for alpha in grid if grid is not None else ALPHA_GRID:
        strategy = AggregationStrategy(kind="interp_topk", k=k, alpha=alpha)
        reranked = rerank(run, passage_scores, strategy, interp_norm=interp_norm)
        report = average_precision(reranked, qrels)
        if report.mean > best_map + 1e-12:
            best_alpha, best_map = alpha, report.mean
    return best_alpha if best_alpha is not None else 0.5
