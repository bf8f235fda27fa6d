#!/usr/bin/env python3
"""Reference computation for the golden metric fixture.

Deliberately independent of the telerank package: parses the fixture
files with its own code and evaluates MAP, P@20, and nDCG@20 (both gain
variants) by direct enumeration. The frozen output in golden.json is
what tests/test_metrics.py and the acceptance suite compare against.

Usage: python scripts/compute_golden_metrics.py tests/fixtures/golden
"""

import json
import math
import sys
from collections import defaultdict
from pathlib import Path

K = 20


def read_qrels(path):
    grades = defaultdict(dict)
    for line in path.read_text().splitlines():
        if line.strip():
            qid, _, did, grade = line.split()
            grades[qid][did] = int(grade)
    return grades


def read_run(path):
    ranked = defaultdict(list)
    for line in path.read_text().splitlines():
        if line.strip():
            qid, _, did, rank, _score, _tag = line.split()
            ranked[qid].append((int(rank), did))
    return {qid: [d for _, d in sorted(rows)] for qid, rows in ranked.items()}


def p_at_k(docs, grades, k):
    return sum(1 for d in docs[:k] if grades.get(d, 0) > 0) / k


def average_precision(docs, grades):
    total_rel = sum(1 for g in grades.values() if g > 0)
    hits, acc = 0, 0.0
    for i, d in enumerate(docs, start=1):
        if grades.get(d, 0) > 0:
            hits += 1
            acc += hits / i
    return acc / total_rel


def dcg(gains):
    return sum(g / math.log2(i + 1) for i, g in enumerate(gains, start=1))


def ndcg_at_k(docs, grades, k, exponential):
    def gain(x):
        return (2 ** x - 1) if exponential else x

    got = [gain(grades.get(d, 0)) for d in docs[:k]]
    ideal = sorted((gain(g) for g in grades.values()), reverse=True)[:k]
    denom = dcg(ideal)
    return dcg(got) / denom if denom > 0 else 0.0


def main(fixture_dir):
    fixture = Path(fixture_dir)
    qrels = read_qrels(fixture / "qrels.txt")
    run = read_run(fixture / "run.txt")

    evaluated = sorted(
        qid for qid, grades in qrels.items()
        if any(g > 0 for g in grades.values())
    )
    per_query = {
        "map": {}, "p20": {}, "ndcg20_exp": {}, "ndcg20_lin": {},
    }
    for qid in evaluated:
        docs = run.get(qid, [])
        grades = qrels[qid]
        per_query["map"][qid] = average_precision(docs, grades)
        per_query["p20"][qid] = p_at_k(docs, grades, K)
        per_query["ndcg20_exp"][qid] = ndcg_at_k(docs, grades, K, exponential=True)
        per_query["ndcg20_lin"][qid] = ndcg_at_k(docs, grades, K, exponential=False)

    golden = {
        "evaluated_queries": evaluated,
        "per_query": per_query,
        "mean": {
            name: sum(values.values()) / len(values)
            for name, values in per_query.items()
        },
    }
    out = fixture / "golden.json"
    out.write_text(json.dumps(golden, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out}")
    for name, mean in sorted(golden["mean"].items()):
        print(f"  {name:12s} {mean:.10f}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/fixtures/golden")
