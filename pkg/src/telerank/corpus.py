"""Corpora, queries, qrels, run files, folds, and training-set exports.

All loaders are strict: structural violations raise with a line number
instead of being repaired. Serialization is canonical (sorted order,
fixed 6-decimal scores) so that re-running a step produces byte-identical
files.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

from .errors import (
    DuplicateDocId,
    MalformedRecord,
    NegativeGrade,
    NonMonotonicScore,
    RankGap,
    TooFewQueries,
)

CORPUS_FORMATS = ("trec_text", "msmarco_tsv", "jsonl")
QUERY_FORMATS = ("tsv", "jsonl")


@dataclass(frozen=True)
class Document:
    id: str
    body: str
    title: str | None = None


@dataclass(frozen=True)
class Query:
    id: str
    text: str


@dataclass(frozen=True)
class RunEntry:
    """One line of a TREC run file: qid Q0 docid rank score tag."""

    query_id: str
    doc_id: str
    rank: int
    score: float
    tag: str


@dataclass(frozen=True)
class TrainingInstance:
    """A labeled (query, passage) pair with full provenance."""

    query_id: str
    doc_id: str
    passage_index: int
    query_text: str
    passage_text: str
    label: str        # "positive" | "negative"
    provenance: str   # "teacher" | "doc_transfer"

    def sort_key(self) -> tuple[str, str, int]:
        return (self.query_id, self.doc_id, self.passage_index)


class Qrels:
    """Graded relevance judgments keyed by (query_id, doc_id).

    Absent pairs are unjudged and count as grade 0 everywhere.
    """

    def __init__(self, judgments: dict[tuple[str, str], int] | None = None, overwrites: int = 0):
        self.judgments: dict[tuple[str, str], int] = dict(judgments or {})
        self.overwrites = overwrites
        for (qid, did), g in self.judgments.items():
            if g < 0:
                raise NegativeGrade(f"grade {g} for ({qid}, {did})")

    def grade(self, query_id: str, doc_id: str) -> int:
        return self.judgments.get((query_id, doc_id), 0)

    def query_ids(self) -> list[str]:
        return sorted({qid for qid, _ in self.judgments})

    def relevant_docs(self, query_id: str) -> dict[str, int]:
        return {
            did: g for (qid, did), g in self.judgments.items()
            if qid == query_id and g > 0
        }

    def n_relevant(self, query_id: str) -> int:
        return len(self.relevant_docs(query_id))

    def grades_for(self, query_id: str) -> dict[str, int]:
        return {did: g for (qid, did), g in self.judgments.items() if qid == query_id}

    def __len__(self) -> int:
        return len(self.judgments)


@dataclass(frozen=True)
class FoldRound:
    """Role assignment for one evaluation round (exactly one test fold)."""

    test: int
    validation: int
    train: tuple[int, ...]


@dataclass
class FoldSpec:
    """Disjoint query-id folds plus per-round train/validation/test roles."""

    folds: list[list[str]]
    rounds: list[FoldRound] = field(default_factory=list)

    def __post_init__(self):
        seen: dict[str, int] = {}
        for i, fold in enumerate(self.folds):
            for qid in fold:
                if qid in seen:
                    raise ValueError(
                        f"query {qid!r} assigned to folds {seen[qid]} and {i}"
                    )
                seen[qid] = i
        tested = [r.test for r in self.rounds]
        if len(set(tested)) != len(tested):
            raise ValueError("a fold is the test fold in more than one round")
        for r in self.rounds:
            if len(self.folds) == 1:
                # degenerate single-fold spec: everything is the test fold
                if (r.test, r.validation, r.train) != (0, 0, ()):
                    raise ValueError(f"round {r}: single-fold spec must test fold 0")
                continue
            roles = sorted([r.test, r.validation, *r.train])
            if roles != list(range(len(self.folds))):
                raise ValueError(f"round {r}: roles do not cover all folds exactly once")

    @property
    def k(self) -> int:
        return len(self.folds)

    def all_queries(self) -> set[str]:
        return {qid for fold in self.folds for qid in fold}

    def fold_of(self, query_id: str) -> int:
        for i, fold in enumerate(self.folds):
            if query_id in fold:
                return i
        raise KeyError(query_id)

    def test_queries(self, round_index: int) -> set[str]:
        return set(self.folds[self.rounds[round_index].test])

    def validation_queries(self, round_index: int) -> set[str]:
        return set(self.folds[self.rounds[round_index].validation])

    def train_queries(self, round_index: int) -> set[str]:
        r = self.rounds[round_index]
        return {qid for i in r.train for qid in self.folds[i]}


# ---------------------------------------------------------------------------
# Corpus loading


def load_corpus(path: str, fmt: str) -> list[Document]:
    """Parse a document collection; strict, order-preserving.

    trec_text: <DOC><DOCNO>id</DOCNO><TEXT>body</TEXT></DOC> blocks
    msmarco_tsv: docid<TAB>url<TAB>title<TAB>body (url ignored)
    jsonl: one object per line with keys id, title (optional), body
    """
    if fmt not in CORPUS_FORMATS:
        raise ValueError(f"unknown corpus format {fmt!r}; expected one of {CORPUS_FORMATS}")
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    if fmt == "trec_text":
        docs = _parse_trec_text(path, lines)
    elif fmt == "msmarco_tsv":
        docs = _parse_msmarco_tsv(path, lines)
    else:
        docs = _parse_jsonl_corpus(path, lines)
    seen: set[str] = set()
    for d in docs:
        if d.id in seen:
            raise DuplicateDocId(d.id)
        seen.add(d.id)
    return docs


def _parse_trec_text(path: str, lines: list[str]) -> list[Document]:
    docs: list[Document] = []
    doc_no: str | None = None
    text_parts: list[str] | None = None
    in_doc = False
    in_text = False
    open_line = 0

    def _tag_payload(line: str, open_tag: str, close_tag: str) -> str:
        inner = line[len(open_tag):]
        return inner[: inner.index(close_tag)].strip()

    for no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if in_text:
            if line == "</TEXT>":
                in_text = False
            elif line.endswith("</TEXT>"):
                text_parts.append(line[: -len("</TEXT>")].rstrip())
                in_text = False
            else:
                text_parts.append(raw)
            continue
        if line == "<DOC>":
            if in_doc:
                raise MalformedRecord(path, no, "<DOC> nested inside an open <DOC> block")
            in_doc, doc_no, text_parts, open_line = True, None, None, no
        elif line == "</DOC>":
            if not in_doc:
                raise MalformedRecord(path, no, "</DOC> without matching <DOC>")
            if doc_no is None:
                raise MalformedRecord(path, no, "document block has no <DOCNO>")
            if text_parts is None:
                raise MalformedRecord(path, no, "document block has no <TEXT>")
            docs.append(Document(id=doc_no, body="\n".join(text_parts)))
            in_doc = False
        elif line.startswith("<DOCNO>"):
            if not in_doc:
                raise MalformedRecord(path, no, "<DOCNO> outside a <DOC> block")
            if "</DOCNO>" not in line:
                raise MalformedRecord(path, no, "unterminated <DOCNO>")
            doc_no = _tag_payload(line, "<DOCNO>", "</DOCNO>")
            if not doc_no:
                raise MalformedRecord(path, no, "empty <DOCNO>")
        elif line.startswith("<TEXT>"):
            if not in_doc:
                raise MalformedRecord(path, no, "<TEXT> outside a <DOC> block")
            text_parts = []
            rest = line[len("<TEXT>"):]
            if rest.endswith("</TEXT>"):
                text_parts.append(rest[: -len("</TEXT>")].strip())
            elif rest.strip():
                text_parts.append(rest.strip())
                in_text = True
            else:
                in_text = True
        # other tags (e.g. <TITLE>) inside a block are not part of this format
    if in_doc:
        raise MalformedRecord(path, open_line, "unterminated <DOC> block at end of file")
    return docs


def _parse_msmarco_tsv(path: str, lines: list[str]) -> list[Document]:
    docs = []
    for no, line in enumerate(lines, start=1):
        if not line:
            continue
        parts = line.split("\t", 3)
        if len(parts) != 4:
            raise MalformedRecord(path, no, f"expected 4 tab-separated fields, got {len(parts)}")
        doc_id, _url, title, body = parts
        if not doc_id:
            raise MalformedRecord(path, no, "empty document id")
        docs.append(Document(id=doc_id, title=title or None, body=body))
    return docs


def _parse_jsonl_corpus(path: str, lines: list[str]) -> list[Document]:
    docs = []
    for no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise MalformedRecord(path, no, f"invalid JSON: {e.msg}") from e
        if not isinstance(obj, dict) or "id" not in obj or "body" not in obj:
            raise MalformedRecord(path, no, "object must carry keys 'id' and 'body'")
        if not obj["id"]:
            raise MalformedRecord(path, no, "empty document id")
        docs.append(Document(id=str(obj["id"]), title=obj.get("title") or None, body=str(obj["body"])))
    return docs


def load_queries(path: str, fmt: str = "tsv") -> list[Query]:
    """Queries as qid<TAB>text lines or jsonl objects {id, text}."""
    if fmt not in QUERY_FORMATS:
        raise ValueError(f"unknown query format {fmt!r}; expected one of {QUERY_FORMATS}")
    queries: list[Query] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as f:
        for no, line in enumerate(f.read().splitlines(), start=1):
            if not line.strip():
                continue
            if fmt == "tsv":
                parts = line.split("\t", 1)
                if len(parts) != 2 or not parts[0] or not parts[1].strip():
                    raise MalformedRecord(path, no, "expected qid<TAB>text")
                qid, text = parts[0], parts[1]
            else:
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as e:
                    raise MalformedRecord(path, no, f"invalid JSON: {e.msg}") from e
                if "id" not in obj or not str(obj.get("text", "")).strip():
                    raise MalformedRecord(path, no, "object must carry keys 'id' and 'text'")
                qid, text = str(obj["id"]), str(obj["text"])
            if qid in seen:
                raise MalformedRecord(path, no, f"duplicate query id {qid!r}")
            seen.add(qid)
            queries.append(Query(id=qid, text=text))
    return queries


# ---------------------------------------------------------------------------
# Qrels


def load_qrels(path: str) -> Qrels:
    """Parse TREC qrels lines "qid 0 docid grade".

    Later duplicate (qid, docid) lines overwrite earlier ones; the number
    of overwrites is reported on the returned object.
    """
    judgments: dict[tuple[str, str], int] = {}
    overwrites = 0
    with open(path, encoding="utf-8") as f:
        for no, line in enumerate(f.read().splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 4:
                raise MalformedRecord(path, no, f"expected 4 whitespace-separated fields, got {len(parts)}")
            qid, _iter, did, grade_s = parts
            try:
                grade = int(grade_s)
            except ValueError:
                raise MalformedRecord(path, no, f"grade {grade_s!r} is not an integer") from None
            if grade < 0:
                raise NegativeGrade(f"{path}:{no}: grade {grade} for ({qid}, {did})")
            if (qid, did) in judgments:
                overwrites += 1
            judgments[(qid, did)] = grade
    return Qrels(judgments, overwrites=overwrites)


def write_qrels(qrels: Qrels, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for (qid, did), g in sorted(qrels.judgments.items()):
            f.write(f"{qid} 0 {did} {g}\n")


# ---------------------------------------------------------------------------
# Run files


def validate_run(entries: list[RunEntry]) -> None:
    """Check per-query rank and score invariants; raise on violation."""
    by_query: dict[str, list[RunEntry]] = {}
    for e in entries:
        by_query.setdefault(e.query_id, []).append(e)
    for qid, group in by_query.items():
        group = sorted(group, key=lambda e: e.rank)
        ranks = [e.rank for e in group]
        if ranks != list(range(1, len(group) + 1)):
            raise RankGap(f"query {qid}: ranks {ranks} are not 1..{len(group)}")
        for prev, cur in zip(group, group[1:]):
            if cur.score > prev.score:
                raise NonMonotonicScore(
                    f"query {qid}: score rises from {prev.score} (rank {prev.rank})"
                    f" to {cur.score} (rank {cur.rank})"
                )


def write_run(entries: list[RunEntry], path: str) -> None:
    """Serialize entries as "qid Q0 docid rank score tag" with 6-decimal scores."""
    validate_run(entries)
    ordered = sorted(entries, key=lambda e: (e.query_id, e.rank))
    with open(path, "w", encoding="utf-8") as f:
        for e in ordered:
            f.write(f"{e.query_id} Q0 {e.doc_id} {e.rank} {e.score:.6f} {e.tag}\n")


def load_run(path: str) -> list[RunEntry]:
    entries: list[RunEntry] = []
    with open(path, encoding="utf-8") as f:
        for no, line in enumerate(f.read().splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 6:
                raise MalformedRecord(path, no, f"expected 6 fields, got {len(parts)}")
            qid, _q0, did, rank_s, score_s, tag = parts
            try:
                rank = int(rank_s)
                score = float(score_s)
            except ValueError:
                raise MalformedRecord(path, no, "rank must be int and score float") from None
            entries.append(RunEntry(qid, did, rank, score, tag))
    validate_run(entries)
    return entries


def run_by_query(entries: list[RunEntry]) -> dict[str, list[RunEntry]]:
    """Group a validated run by query, ordered by rank."""
    grouped: dict[str, list[RunEntry]] = {}
    for e in entries:
        grouped.setdefault(e.query_id, []).append(e)
    return {qid: sorted(g, key=lambda e: e.rank) for qid, g in sorted(grouped.items())}


# ---------------------------------------------------------------------------
# Training-set export


@dataclass(frozen=True)
class ExportReport:
    count: int
    cells_sanitized: int


def export_training(instances: list[TrainingInstance], path: str, fmt: str = "jsonl") -> ExportReport:
    """Write training instances in deterministic (query, doc, passage) order.

    tsv rows are query_text<TAB>passage_text<TAB>{1|0}; tab/newline
    characters inside text cells are replaced by single spaces and the
    number of sanitized cells is reported.
    """
    if fmt not in ("jsonl", "tsv"):
        raise ValueError(f"unknown training export format {fmt!r}")
    ordered = sorted(instances, key=TrainingInstance.sort_key)
    sanitized = 0
    with open(path, "w", encoding="utf-8") as f:
        for inst in ordered:
            if fmt == "jsonl":
                f.write(json.dumps({
                    "query_id": inst.query_id,
                    "doc_id": inst.doc_id,
                    "passage_index": inst.passage_index,
                    "query_text": inst.query_text,
                    "passage_text": inst.passage_text,
                    "label": inst.label,
                    "provenance": inst.provenance,
                }, ensure_ascii=False, sort_keys=True) + "\n")
            else:
                cells = []
                for cell in (inst.query_text, inst.passage_text):
                    clean = cell.replace("\t", " ").replace("\n", " ").replace("\r", " ")
                    if clean != cell:
                        sanitized += 1
                    cells.append(clean)
                label = "1" if inst.label == "positive" else "0"
                f.write(f"{cells[0]}\t{cells[1]}\t{label}\n")
    return ExportReport(count=len(ordered), cells_sanitized=sanitized)


def load_training(path: str) -> list[TrainingInstance]:
    instances = []
    with open(path, encoding="utf-8") as f:
        for no, line in enumerate(f.read().splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedRecord(path, no, f"invalid JSON: {e.msg}") from e
            try:
                instances.append(TrainingInstance(
                    query_id=obj["query_id"],
                    doc_id=obj["doc_id"],
                    passage_index=int(obj["passage_index"]),
                    query_text=obj["query_text"],
                    passage_text=obj["passage_text"],
                    label=obj["label"],
                    provenance=obj["provenance"],
                ))
            except KeyError as e:
                raise MalformedRecord(path, no, f"missing field {e.args[0]!r}") from None
    return instances


# ---------------------------------------------------------------------------
# Folds


def make_folds(query_ids: list[str], k: int, seed: int) -> FoldSpec:
    """Seeded shuffle then round-robin assignment into k folds.

    Fold sizes differ by at most one; round r tests fold r and validates
    on fold (r+1) mod k. Deterministic per seed regardless of input order.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    ids = sorted(set(query_ids))
    if len(ids) < k:
        raise TooFewQueries(f"{len(ids)} query ids cannot fill {k} folds")
    rng = random.Random(seed)
    rng.shuffle(ids)
    folds: list[list[str]] = [[] for _ in range(k)]
    for i, qid in enumerate(ids):
        folds[i % k].append(qid)
    rounds = [
        FoldRound(
            test=r,
            validation=(r + 1) % k,
            train=tuple(i for i in range(k) if i not in (r, (r + 1) % k)),
        )
        for r in range(k)
    ]
    return FoldSpec(folds=folds, rounds=rounds)


def write_folds(spec: FoldSpec, path: str) -> None:
    payload = {
        "k": spec.k,
        "folds": spec.folds,
        "rounds": [
            {"test": r.test, "validation": r.validation, "train": list(r.train)}
            for r in spec.rounds
        ],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def load_folds(path: str) -> FoldSpec:
    with open(path, encoding="utf-8") as f:
        payload = json.load(f)
    rounds = [
        FoldRound(test=r["test"], validation=r["validation"], train=tuple(r["train"]))
        for r in payload.get("rounds", [])
    ]
    return FoldSpec(folds=[list(fold) for fold in payload["folds"]], rounds=rounds)
