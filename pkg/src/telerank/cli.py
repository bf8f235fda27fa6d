"""Command-line entry point.

Subcommands: index build, retrieve, chunk, label, sample, rerank,
evaluate, compare, folds, bench. Every subcommand that writes a primary
output also writes <output>.manifest.json recording the flags, input
digests, seeds, and tool version needed to reproduce it byte for byte.

A config file (--config) may pre-set any flag as `key = value` lines
(dashes or underscores, '#' comments); explicit flags always win.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from datetime import datetime, timezone

from . import __version__
from .aggregation import (
    AggregationStrategy,
    fit_interpolation_alpha,
    load_passage_scores,
    rerank,
    write_passage_scores,
)
from .chunking import (
    ChunkingPolicy,
    chunk_corpus,
    load_passages,
    write_passages,
)
from .corpus import (
    CORPUS_FORMATS,
    QUERY_FORMATS,
    Query,
    export_training,
    load_corpus,
    load_folds,
    load_qrels,
    load_queries,
    load_run,
    load_training,
    make_folds,
    write_folds,
    write_run,
)
from .errors import TelerankError
from .index import (
    DEFAULT_B,
    DEFAULT_K1,
    DEFAULT_MU,
    DEFAULT_TOP_K,
    RetrievalParams,
    build_index,
    load_index,
    retrieve_all,
    save_index,
)
from .labeling import (
    LabeledPool,
    LabelingPolicy,
    PoolStats,
    candidates_from_run,
    enforce_split_hygiene,
    label_passages,
    sample_negatives,
)
from .metrics import (
    bench_inference,
    metric_from_name,
    paired_ttest,
    write_per_query_csv,
    write_timings_csv,
)
from .scoring import DEFAULT_TIMEOUT, ScorerPool

DEFAULT_SEED = 123


# ---------------------------------------------------------------------------
# Config file and manifest


def _load_config(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for no, raw in enumerate(f.read().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise TelerankError(f"{path}:{no}: expected 'key = value'")
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_manifest(out_path: str, subcommand: str, args: argparse.Namespace,
                    inputs: list[str], started: float) -> None:
    flags = {
        k: v for k, v in sorted(vars(args).items())
        if k not in ("func", "command", "subcommand", "config") and v is not None
    }
    manifest = {
        "subcommand": subcommand,
        "tool_version": __version__,
        "flags": flags,
        "inputs": {p: _sha256(p) for p in sorted(set(inputs)) if p and os.path.exists(p)},
        "seeds": {k: v for k, v in flags.items() if "seed" in k},
        "started_at": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "duration_s": round(time.time() - started, 3),
    }
    with open(out_path + ".manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


# ---------------------------------------------------------------------------
# Shared helpers


def _scorer_pool(args: argparse.Namespace) -> ScorerPool:
    index = load_index(args.index) if getattr(args, "index", None) else None
    return ScorerPool.build(
        args.scorer,
        size=getattr(args, "scorer_pool", 1),
        index=index,
        timeout=getattr(args, "timeout_secs", DEFAULT_TIMEOUT),
    )


def _chunk_policy(args: argparse.Namespace) -> ChunkingPolicy:
    policy = ChunkingPolicy.from_name(args.policy, seed=args.seed)
    overrides = {}
    if getattr(args, "target_len", None):
        overrides["target_len"] = args.target_len
    if getattr(args, "window_len", None):
        overrides["window_len"] = args.window_len
    if getattr(args, "stride", None):
        overrides["stride"] = args.stride
    if getattr(args, "max_passages", None):
        overrides["max_passages"] = args.max_passages
    if overrides:
        policy = ChunkingPolicy(**{**policy.__dict__, **overrides})
    return policy


def _score_passages(args, run_entries, queries):
    """Score every passage of every first-stage candidate; returns the
    {(query_id, doc_id): [score, ...]} map used by reranking."""
    passages_by_doc = load_passages(args.passages)
    by_id = {q.id: q for q in queries} if queries else {}
    candidates = candidates_from_run(run_entries)
    tasks = []
    keys = []
    for qid in sorted(candidates):
        # Oracle scorers match on ids alone; text-based scorers need --queries.
        query = by_id.get(qid) or Query(id=qid, text="")
        for did in candidates[qid]:
            ps = passages_by_doc.get(did, [])
            if ps:
                tasks.append((query, ps))
                keys.append((qid, did))
    with _scorer_pool(args) as pool:
        scored = pool.score_tasks(tasks, threads=args.threads)
    return {key: scores for key, scores in zip(keys, scored)}


# ---------------------------------------------------------------------------
# Subcommand handlers


def _cmd_index(args) -> int:
    started = time.time()
    docs = load_corpus(args.corpus, args.format)
    idx = build_index(docs)
    save_index(idx, args.out)
    _write_manifest(args.out, "index build", args, [args.corpus], started)
    print(f"indexed {idx.doc_count} documents, {idx.collection_length} tokens -> {args.out}")
    return 0


def _cmd_retrieve(args) -> int:
    started = time.time()
    idx = load_index(args.index)
    queries = load_queries(args.queries, args.queries_format)
    params = RetrievalParams(
        model=args.model, mu=args.mu, k1=args.k1, b=args.b, top_k=args.top_k,
    )
    entries = retrieve_all(queries, idx, params, tag=args.tag)
    write_run(entries, args.run_out)
    _write_manifest(args.run_out, "retrieve", args, [args.index, args.queries], started)
    print(f"retrieved {len(entries)} entries for {len(queries)} queries -> {args.run_out}")
    return 0


def _cmd_chunk(args) -> int:
    started = time.time()
    docs = load_corpus(args.corpus, args.format)
    policy = _chunk_policy(args)
    passages = chunk_corpus(docs, policy)
    n = write_passages(passages, args.out)
    _write_manifest(args.out, "chunk", args, [args.corpus], started)
    print(f"wrote {n} passages for {len(docs)} documents -> {args.out}")
    return 0


def _cmd_label(args) -> int:
    started = time.time()
    run_entries = load_run(args.run)
    qrels = load_qrels(args.qrels)
    queries = load_queries(args.queries, args.queries_format)
    passages_by_doc = load_passages(args.passages)
    policy = LabelingPolicy(
        kind=args.policy.replace("-", "_"), tau=args.tau, seed=args.seed,
    )
    candidates = candidates_from_run(run_entries)
    queries = [q for q in queries if q.id in candidates]
    pool_scorer = _scorer_pool(args) if policy.kind == "teacher" else None
    try:
        pool = label_passages(
            queries, candidates, passages_by_doc, qrels, policy,
            scorer=pool_scorer, threads=args.threads,
        )
    finally:
        if pool_scorer is not None:
            pool_scorer.close()
    instances = pool.positives + pool.negative_candidates
    if args.folds:
        if args.round is None:
            raise TelerankError("--folds requires --round to know which fold is the test fold")
        fold_spec = load_folds(args.folds)
        if not 0 <= args.round < len(fold_spec.rounds):
            raise TelerankError(
                f"--round {args.round} outside 0..{len(fold_spec.rounds) - 1}"
            )
        enforce_split_hygiene(fold_spec, args.round, instances)
    report = export_training(instances, args.out, fmt="jsonl")
    _write_manifest(args.out, "label", args,
                    [args.run, args.qrels, args.queries, args.passages, args.folds or ""],
                    started)
    print(
        f"labeled pool: {pool.stats.n_positives} positives,"
        f" {pool.stats.n_negative_candidates} negative candidates,"
        f" {pool.stats.n_discarded} discarded -> {args.out} ({report.count} lines)"
    )
    return 0


def _cmd_sample(args) -> int:
    started = time.time()
    instances = load_training(args.pool)
    pool = LabeledPool(
        positives=[i for i in instances if i.label == "positive"],
        negative_candidates=[i for i in instances if i.label == "negative"],
        stats=PoolStats(),
    )
    training = sample_negatives(pool, seed=args.seed)
    report = export_training(training.instances, args.out, fmt=args.format)
    _write_manifest(args.out, "sample", args, [args.pool], started)
    n_pos = len(training.positives())
    n_neg = len(training.negatives())
    print(f"sampled training set: {n_pos} positives, {n_neg} negatives -> {args.out}")
    for qid, missing in sorted(training.shortfalls.items()):
        print(f"  shortfall: query {qid} lacks {missing} negative candidates", file=sys.stderr)
    if report.cells_sanitized:
        print(f"  sanitized {report.cells_sanitized} cells for tsv", file=sys.stderr)
    return 0


def _cmd_rerank(args) -> int:
    started = time.time()
    run_entries = load_run(args.run)
    inputs = [args.run]
    if args.passage_scores:
        scores = load_passage_scores(args.passage_scores)
        inputs.append(args.passage_scores)
    elif args.passages and args.scorer:
        queries = load_queries(args.queries, args.queries_format) if args.queries else []
        scores = _score_passages(args, run_entries, queries)
        inputs.extend([args.passages, args.queries or ""])
        if args.scores_out:
            write_passage_scores(scores, args.scores_out)
    else:
        raise TelerankError("rerank needs --passage-scores, or --passages with --scorer")

    alpha = args.alpha
    if args.agg == "interp" and alpha == "auto":
        if not args.qrels:
            raise TelerankError("--alpha auto needs --qrels (and ideally --folds/--round)")
        qrels = load_qrels(args.qrels)
        validation = None
        if args.folds:
            if args.round is None:
                raise TelerankError("--folds requires --round")
            validation = load_folds(args.folds).validation_queries(args.round)
            inputs.append(args.folds)
        inputs.append(args.qrels)
        alpha = fit_interpolation_alpha(
            run_entries, scores, qrels, validation,
            k=args.k, interp_norm=args.interp_norm,
        )
        print(f"fitted alpha = {alpha}")
    strategy = AggregationStrategy.from_name(
        args.agg, k=args.k, alpha=float(alpha) if alpha != "auto" else 0.5,
    )
    reranked = rerank(run_entries, scores, strategy, tag=args.tag, interp_norm=args.interp_norm)
    write_run(reranked, args.out)
    _write_manifest(args.out, "rerank", args, inputs, started)
    print(f"reranked {len(reranked)} entries with {args.agg} -> {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    started = time.time()
    run = load_run(args.run)
    qrels = load_qrels(args.qrels)
    names = [m.strip() for m in args.metrics.split(",") if m.strip()]
    reports = [metric_from_name(name, args.gain)(run, qrels) for name in names]
    for r in reports:
        print(f"{r.metric:<10} {r.mean:.6f}   ({len(r.per_query)} queries, {r.n_excluded} excluded)")
    if args.per_query:
        write_per_query_csv(reports, args.per_query)
        _write_manifest(args.per_query, "evaluate", args, [args.run, args.qrels], started)
    return 0


def _cmd_compare(args) -> int:
    run_a = load_run(args.run_a)
    run_b = load_run(args.run_b)
    qrels = load_qrels(args.qrels)
    metric = metric_from_name(args.metric, args.gain)
    report_a = metric(run_a, qrels)
    report_b = metric(run_b, qrels)
    result = paired_ttest(
        report_a.per_query, report_b.per_query,
        m_comparisons=args.bonferroni, alpha=args.alpha,
    )
    p_str = "< 1e-12" if 0.0 <= result.p_value < 1e-12 else f"{result.p_value:.6f}"
    corr_str = "< 1e-12" if 0.0 <= result.corrected_p < 1e-12 else f"{result.corrected_p:.6f}"
    print(f"{args.metric}: a={report_a.mean:.6f} b={report_b.mean:.6f}")
    print(
        f"paired t-test: t={result.t_statistic:.4f} p={p_str}"
        f" corrected_p={corr_str} (m={args.bonferroni}, n={result.n_pairs})"
    )
    print("significant" if result.significant else "not significant",
          f"at alpha={args.alpha}")
    return 0


def _cmd_folds(args) -> int:
    started = time.time()
    queries = load_queries(args.queries, args.queries_format)
    spec = make_folds([q.id for q in queries], k=args.k, seed=args.seed)
    write_folds(spec, args.out)
    _write_manifest(args.out, "folds", args, [args.queries], started)
    sizes = [len(f) for f in spec.folds]
    print(f"split {sum(sizes)} queries into folds of sizes {sizes} -> {args.out}")
    return 0


def _cmd_bench(args) -> int:
    started = time.time()
    idx = load_index(args.index)
    docs = load_corpus(args.corpus, args.format)
    queries = load_queries(args.queries, args.queries_format)
    params = RetrievalParams(model=args.model, mu=args.mu, k1=args.k1, b=args.b,
                             top_k=args.top_k)
    policy = _chunk_policy(args)
    strategy = AggregationStrategy.from_name(args.agg)

    # Preparation outside the timed region: first-stage run, chunking,
    # and task building per query.
    run_entries = retrieve_all(queries, idx, params)
    passages_by_doc = chunk_corpus(docs, policy)
    candidates = candidates_from_run(run_entries)
    by_id = {q.id: q for q in queries}
    prepared = {}
    for qid in sorted(candidates):
        tasks = [
            (by_id[qid], passages_by_doc[did])
            for did in candidates[qid]
            if passages_by_doc.get(did)
        ]
        prepared[qid] = tasks

    per_query_run = {qid: [e for e in run_entries if e.query_id == qid] for qid in prepared}
    with _scorer_pool(args) as pool:

        def scoring_and_aggregation(qid: str) -> None:
            tasks = prepared[qid]
            scored = pool.score_tasks(tasks, threads=args.threads)
            passage_scores = {
                (qid, tasks[i][1][0].doc_id): scores for i, scores in enumerate(scored)
            }
            rerank(per_query_run[qid], passage_scores, strategy)

        stats = bench_inference(sorted(prepared), scoring_and_aggregation)

    print(
        f"processed {len(prepared)} queries: mean {stats.mean_ms:.2f} ms,"
        f" median {stats.median_ms:.2f} ms, stddev {stats.stddev_ms:.2f} ms"
    )
    if args.csv:
        write_timings_csv(stats, args.csv)
        _write_manifest(args.csv, "bench", args,
                        [args.index, args.corpus, args.queries], started)
    return 0


# ---------------------------------------------------------------------------
# Parser


def _add_common(p: argparse.ArgumentParser, *, seed: bool = True, threads: bool = True):
    p.add_argument("--config", help="key=value file pre-setting any flag")
    if seed:
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    if threads:
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1)


def _add_scorer_flags(p: argparse.ArgumentParser):
    p.add_argument("--scorer", help="lexical | oracle:<path> | exec:<cmd> | tcp:<host:port>")
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--scorer-pool", type=int, default=1)
    p.add_argument("--timeout-secs", type=float, default=DEFAULT_TIMEOUT)


def _add_retrieval_flags(p: argparse.ArgumentParser):
    p.add_argument("--model", choices=["ql", "bm25"], default="ql")
    p.add_argument("--mu", type=float, default=DEFAULT_MU)
    p.add_argument("--k1", type=float, default=DEFAULT_K1)
    p.add_argument("--b", type=float, default=DEFAULT_B)
    p.add_argument("--top-k", type=int, default=DEFAULT_TOP_K)


def _add_chunk_flags(p: argparse.ArgumentParser):
    p.add_argument("--policy", choices=["sentence100", "window150-75", "sentences"],
                   default="sentence100")
    p.add_argument("--target-len", type=int)
    p.add_argument("--window-len", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--max-passages", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="telerank",
        description="Telescoping document reranking toolkit",
    )
    parser.add_argument("--version", action="version", version=f"telerank {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", help="build or inspect an index")
    index_sub = p_index.add_subparsers(dest="subcommand", required=True)
    p_build = index_sub.add_parser("build", help="build an inverted index snapshot")
    p_build.add_argument("--corpus", required=True)
    p_build.add_argument("--format", choices=list(CORPUS_FORMATS), default="jsonl")
    p_build.add_argument("--out", required=True)
    _add_common(p_build, seed=False, threads=False)
    p_build.set_defaults(func=_cmd_index)

    p_ret = sub.add_parser("retrieve", help="first-stage retrieval into a run file")
    p_ret.add_argument("--index", required=True)
    p_ret.add_argument("--queries", required=True)
    p_ret.add_argument("--queries-format", choices=list(QUERY_FORMATS), default="tsv")
    _add_retrieval_flags(p_ret)
    p_ret.add_argument("--tag", default="telerank")
    p_ret.add_argument("--run-out", required=True)
    _add_common(p_ret, seed=False, threads=False)
    p_ret.set_defaults(func=_cmd_retrieve)

    p_chunk = sub.add_parser("chunk", help="split documents into passages")
    p_chunk.add_argument("--corpus", required=True)
    p_chunk.add_argument("--format", choices=list(CORPUS_FORMATS), default="jsonl")
    _add_chunk_flags(p_chunk)
    p_chunk.add_argument("--out", required=True)
    _add_common(p_chunk, threads=False)
    p_chunk.set_defaults(func=_cmd_chunk)

    p_label = sub.add_parser("label", help="build a labeled passage pool")
    p_label.add_argument("--policy", choices=["teacher", "doc-transfer"], required=True)
    p_label.add_argument("--run", required=True, help="first-stage run file")
    p_label.add_argument("--qrels", required=True)
    p_label.add_argument("--queries", required=True)
    p_label.add_argument("--queries-format", choices=list(QUERY_FORMATS), default="tsv")
    p_label.add_argument("--passages", required=True)
    p_label.add_argument("--index", help="index snapshot (lexical scorer only)")
    p_label.add_argument("--folds", help="fold file; enforces the leakage gate")
    p_label.add_argument("--round", type=int, help="cross-validation round being trained")
    p_label.add_argument("--out", required=True)
    _add_scorer_flags(p_label)
    _add_common(p_label)
    p_label.set_defaults(func=_cmd_label)

    p_sample = sub.add_parser("sample", help="balance a labeled pool into a training set")
    p_sample.add_argument("--pool", required=True)
    p_sample.add_argument("--format", choices=["jsonl", "tsv"], default="jsonl")
    p_sample.add_argument("--out", required=True)
    _add_common(p_sample, threads=False)
    p_sample.set_defaults(func=_cmd_sample)

    p_rerank = sub.add_parser("rerank", help="rerank a run from passage scores")
    p_rerank.add_argument("--run", required=True)
    p_rerank.add_argument("--passage-scores")
    p_rerank.add_argument("--passages", help="score passages in-process instead")
    p_rerank.add_argument("--queries")
    p_rerank.add_argument("--queries-format", choices=list(QUERY_FORMATS), default="tsv")
    p_rerank.add_argument("--index", help="index snapshot (lexical scorer only)")
    p_rerank.add_argument("--scores-out", help="also write computed passage scores")
    p_rerank.add_argument("--agg", choices=["firstp", "maxp", "sump", "avgp", "interp"],
                          default="maxp")
    p_rerank.add_argument("--k", type=int, default=3)
    p_rerank.add_argument("--alpha", default="0.5", help="interpolation weight or 'auto'")
    p_rerank.add_argument("--interp-norm", choices=["minmax", "zscore"], default="minmax")
    p_rerank.add_argument("--qrels", help="needed for --alpha auto")
    p_rerank.add_argument("--folds")
    p_rerank.add_argument("--round", type=int)
    p_rerank.add_argument("--tag", default="telerank")
    p_rerank.add_argument("--out", required=True)
    _add_scorer_flags(p_rerank)
    _add_common(p_rerank)
    p_rerank.set_defaults(func=_cmd_rerank)

    p_eval = sub.add_parser("evaluate", help="score a run against qrels")
    p_eval.add_argument("--run", required=True)
    p_eval.add_argument("--qrels", required=True)
    p_eval.add_argument("--metrics", default="map,p20,ndcg20")
    p_eval.add_argument("--gain", choices=["exp", "lin"], default="exp")
    p_eval.add_argument("--per-query", help="write per-query values as CSV")
    _add_common(p_eval, seed=False, threads=False)
    p_eval.set_defaults(func=_cmd_evaluate)

    p_cmp = sub.add_parser("compare", help="paired significance test between two runs")
    p_cmp.add_argument("--run-a", required=True)
    p_cmp.add_argument("--run-b", required=True)
    p_cmp.add_argument("--qrels", required=True)
    p_cmp.add_argument("--metric", default="map")
    p_cmp.add_argument("--gain", choices=["exp", "lin"], default="exp")
    p_cmp.add_argument("--alpha", type=float, default=0.05)
    p_cmp.add_argument("--bonferroni", type=int, default=1,
                       help="number of comparisons m for correction")
    _add_common(p_cmp, seed=False, threads=False)
    p_cmp.set_defaults(func=_cmd_compare)

    p_folds = sub.add_parser("folds", help="split queries into cross-validation folds")
    p_folds.add_argument("--queries", required=True)
    p_folds.add_argument("--queries-format", choices=list(QUERY_FORMATS), default="tsv")
    p_folds.add_argument("--k", type=int, default=5)
    p_folds.add_argument("--out", required=True)
    _add_common(p_folds, threads=False)
    p_folds.set_defaults(func=_cmd_folds)

    p_bench = sub.add_parser("bench", help="time scoring + aggregation per query")
    p_bench.add_argument("--queries", required=True)
    p_bench.add_argument("--queries-format", choices=list(QUERY_FORMATS), default="tsv")
    p_bench.add_argument("--index", required=True)
    p_bench.add_argument("--corpus", required=True)
    p_bench.add_argument("--format", choices=list(CORPUS_FORMATS), default="jsonl")
    _add_retrieval_flags(p_bench)
    _add_chunk_flags(p_bench)
    p_bench.add_argument("--agg", choices=["firstp", "maxp", "sump", "avgp"], default="maxp")
    p_bench.add_argument("--csv", help="write per-query timings")
    _add_scorer_flags(p_bench)
    _add_common(p_bench)
    p_bench.set_defaults(func=_cmd_bench)

    return parser


def _inject_config(argv: list[str], parser: argparse.ArgumentParser) -> list[str]:
    """Splice config values in as flags right after the subcommand, so
    argparse applies the normal type conversion and any explicit flag
    (appearing later) wins."""
    config_path = argv[argv.index("--config") + 1]
    config = _load_config(config_path)

    # Walk to the invoked (possibly nested) subparser.
    sub_action = parser._subparsers._group_actions[0]  # noqa: SLF001
    pos = next((i for i, a in enumerate(argv) if a in sub_action.choices), None)
    if pos is None:
        return argv
    target = sub_action.choices[argv[pos]]
    nested = [a for a in target._actions if isinstance(a, argparse._SubParsersAction)]  # noqa: SLF001
    if nested:
        pos2 = next((i for i in range(pos + 1, len(argv)) if argv[i] in nested[0].choices), None)
        if pos2 is None:
            return argv
        target, pos = nested[0].choices[argv[pos2]], pos2

    known = {a.dest: a for a in target._actions}  # noqa: SLF001
    insert: list[str] = []
    for key, value in config.items():
        action = known.get(key)
        if action is None or not action.option_strings:
            continue
        flag = action.option_strings[-1]
        if flag in argv:
            continue  # explicit flag wins
        insert.extend([flag, value])
    return argv[: pos + 1] + insert + argv[pos + 1:]


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        if "--config" in argv:
            argv = _inject_config(argv, parser)
        args = parser.parse_args(argv)
        return args.func(args)
    except (TelerankError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
