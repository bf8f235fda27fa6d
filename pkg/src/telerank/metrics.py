"""Rank-quality metrics (MAP, P@k, nDCG@k), paired significance testing
with Bonferroni correction, cross-validated evaluation, and a wall-clock
benchmark harness.

Conventions (matching common trec_eval usage): unjudged documents count
as non-relevant; queries with no relevant document in the qrels are
excluded from means and reported as excluded; a judged query missing
from the run scores 0. nDCG gain is exponential (2^grade - 1) by
default, linear behind a flag.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as _scipy_stats

from .corpus import FoldSpec, Qrels, RunEntry, run_by_query
from .errors import (
    EmptyQuerySet,
    LengthMismatch,
    MissingFoldRun,
    NoJudgedQueries,
    TooFewPairs,
)

GAIN_KINDS = ("exp", "lin")


@dataclass
class MetricReport:
    metric: str
    cutoff: int | None
    per_query: dict[str, float]
    mean: float
    n_excluded: int = 0


def _qualifying_queries(run: list[RunEntry], qrels: Qrels) -> tuple[list[str], int]:
    """Queries to average over: judged with >= 1 relevant document.

    Also counts run queries excluded for having no relevant document.
    """
    with_rel = {qid for qid in qrels.query_ids() if qrels.n_relevant(qid) > 0}
    if not with_rel:
        raise NoJudgedQueries("qrels contain no relevant documents")
    run_queries = {e.query_id for e in run}
    excluded = len(run_queries - with_rel)
    return sorted(with_rel), excluded


def _mean(values: dict[str, float]) -> float:
    return math.fsum(values.values()) / len(values) if values else 0.0


def precision_at_k(run: list[RunEntry], qrels: Qrels, k: int) -> MetricReport:
    """Fraction of the top k that is relevant; denominator stays k even
    when fewer documents were retrieved."""
    if k < 1:
        raise ValueError("k must be at least 1")
    qualifying, excluded = _qualifying_queries(run, qrels)
    grouped = run_by_query(run)
    per_query = {}
    for qid in qualifying:
        top = grouped.get(qid, [])[:k]
        hits = sum(1 for e in top if qrels.grade(qid, e.doc_id) > 0)
        per_query[qid] = hits / k
    return MetricReport(f"p{k}", k, per_query, _mean(per_query), excluded)


def average_precision(run: list[RunEntry], qrels: Qrels) -> MetricReport:
    """AP over the full retrieved list, normalized by the total number of
    relevant documents (retrieved or not); the mean is MAP."""
    qualifying, excluded = _qualifying_queries(run, qrels)
    grouped = run_by_query(run)
    per_query = {}
    for qid in qualifying:
        total_rel = qrels.n_relevant(qid)
        hits = 0
        precisions = []
        for position, e in enumerate(grouped.get(qid, []), start=1):
            if qrels.grade(qid, e.doc_id) > 0:
                hits += 1
                precisions.append(hits / position)
        per_query[qid] = math.fsum(precisions) / total_rel
    return MetricReport("map", None, per_query, _mean(per_query), excluded)


def _gain(grade: int, kind: str) -> float:
    if kind == "exp":
        return float(2 ** grade - 1)
    if kind == "lin":
        return float(grade)
    raise ValueError(f"unknown gain kind {kind!r}")


def ndcg_at_k(run: list[RunEntry], qrels: Qrels, k: int, gain: str = "exp") -> MetricReport:
    """DCG@k / ideal DCG@k with discount log2(rank + 1)."""
    if k < 1:
        raise ValueError("k must be at least 1")
    qualifying, excluded = _qualifying_queries(run, qrels)
    grouped = run_by_query(run)
    per_query = {}
    for qid in qualifying:
        dcg = math.fsum(
            _gain(qrels.grade(qid, e.doc_id), gain) / math.log2(position + 1)
            for position, e in enumerate(grouped.get(qid, [])[:k], start=1)
        )
        ideal = sorted(qrels.grades_for(qid).values(), reverse=True)[:k]
        idcg = math.fsum(
            _gain(g, gain) / math.log2(position + 1)
            for position, g in enumerate(ideal, start=1)
        )
        per_query[qid] = dcg / idcg if idcg > 0 else 0.0
    return MetricReport(f"ndcg{k}", k, per_query, _mean(per_query), excluded)


def metric_from_name(name: str, gain: str = "exp"):
    """Resolve "map", "p<k>" or "ndcg<k>" into a (run, qrels) callable."""
    if name == "map":
        return average_precision
    if name.startswith("p") and name[1:].isdigit():
        k = int(name[1:])
        return lambda run, qrels: precision_at_k(run, qrels, k)
    if name.startswith("ndcg") and name[4:].isdigit():
        k = int(name[4:])
        return lambda run, qrels: ndcg_at_k(run, qrels, k, gain)
    raise ValueError(f"unknown metric {name!r} (expected map, p<k>, or ndcg<k>)")


# ---------------------------------------------------------------------------
# Significance


@dataclass(frozen=True)
class SignificanceResult:
    t_statistic: float
    p_value: float
    corrected_p: float
    n_pairs: int
    alpha: float

    @property
    def significant(self) -> bool:
        return self.corrected_p < self.alpha


def paired_ttest(
    values_a: dict[str, float],
    values_b: dict[str, float],
    m_comparisons: int = 1,
    alpha: float = 0.05,
) -> SignificanceResult:
    """Two-sided paired Student t-test on per-query differences, with
    Bonferroni-corrected p = min(1, m * p).

    An all-zero difference vector reports t = 0, p = 1; zero variance with
    a nonzero mean reports p = 0 (printed downstream as < 1e-12).
    """
    if set(values_a) != set(values_b):
        raise LengthMismatch("per-query value maps cover different query ids")
    if len(values_a) < 2:
        raise TooFewPairs(f"need at least 2 pairs, got {len(values_a)}")
    if m_comparisons < 1:
        raise ValueError("m_comparisons must be at least 1")
    qids = sorted(values_a)
    diffs = np.array([values_a[q] - values_b[q] for q in qids])
    n = len(diffs)
    mean = float(diffs.mean())
    sd = float(diffs.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            t_stat, p = 0.0, 1.0
        else:
            t_stat, p = math.copysign(math.inf, mean), 0.0
    else:
        t_stat = mean / (sd / math.sqrt(n))
        p = 2.0 * float(_scipy_stats.t.sf(abs(t_stat), df=n - 1))
    return SignificanceResult(
        t_statistic=t_stat,
        p_value=p,
        corrected_p=min(1.0, m_comparisons * p),
        n_pairs=n,
        alpha=alpha,
    )


# ---------------------------------------------------------------------------
# Cross-validation


def cross_validate(
    fold_spec: FoldSpec,
    runs_by_round: dict[int, list[RunEntry]],
    qrels: Qrels,
    metric_names: list[str],
    gain: str = "exp",
) -> dict[str, MetricReport]:
    """Pool per-query metrics, each taken from the round where the query
    sat in the test fold."""
    for r in range(len(fold_spec.rounds)):
        if r not in runs_by_round:
            raise MissingFoldRun(r)
    pooled: dict[str, dict[str, float]] = {name: {} for name in metric_names}
    excluded: dict[str, int] = {name: 0 for name in metric_names}
    cutoffs: dict[str, int | None] = {name: None for name in metric_names}
    for r, fold_round in enumerate(fold_spec.rounds):
        run = runs_by_round[r]
        test_queries = fold_spec.test_queries(r)
        round_run = [e for e in run if e.query_id in test_queries]
        for name in metric_names:
            report = metric_from_name(name, gain)(round_run, qrels)
            for qid in test_queries:
                if qid in report.per_query:
                    pooled[name][qid] = report.per_query[qid]
            excluded[name] += report.n_excluded
            cutoffs[name] = report.cutoff
    return {
        name: MetricReport(
            metric=name,
            cutoff=cutoffs[name],
            per_query=pooled[name],
            mean=_mean(pooled[name]),
            n_excluded=excluded[name],
        )
        for name in metric_names
    }


# ---------------------------------------------------------------------------
# Timing harness


@dataclass
class BenchStats:
    mean_ms: float
    median_ms: float
    stddev_ms: float
    per_query: list[tuple[str, float]] = field(default_factory=list)


def bench_inference(query_ids: list[str], pipeline) -> BenchStats:
    """Time pipeline(query_id) per query with a monotonic clock.

    The callable must wrap only the work being measured (scoring and
    aggregation); preparation such as tokenization and batch building
    belongs outside it.
    """
    if not query_ids:
        raise EmptyQuerySet("benchmark needs at least one query")
    timings: list[tuple[str, float]] = []
    for qid in query_ids:
        start = time.perf_counter()
        pipeline(qid)
        timings.append((qid, (time.perf_counter() - start) * 1000.0))
    values = np.array([ms for _, ms in timings])
    return BenchStats(
        mean_ms=float(values.mean()),
        median_ms=float(np.median(values)),
        stddev_ms=float(values.std(ddof=1)) if len(values) > 1 else 0.0,
        per_query=timings,
    )


def write_timings_csv(stats: BenchStats, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("query_id,milliseconds\n")
        for qid, ms in stats.per_query:
            f.write(f"{qid},{ms:.6f}\n")


def write_per_query_csv(reports: list[MetricReport], path: str) -> None:
    """All reports side by side, one row per query, sorted by query id."""
    qids = sorted({qid for r in reports for qid in r.per_query})
    with open(path, "w", encoding="utf-8") as f:
        f.write("query_id," + ",".join(r.metric for r in reports) + "\n")
        for qid in qids:
            cells = [f"{r.per_query[qid]:.6f}" if qid in r.per_query else "" for r in reports]
            f.write(f"{qid}," + ",".join(cells) + "\n")
