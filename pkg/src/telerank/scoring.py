"""Uniform passage scoring: built-in lexical scorer, oracle scorer for
tests, and a client for external scorer processes.

Wire protocol (newline-delimited UTF-8 JSON, LF-terminated):

    scorer -> client   {"hello": str, "version": str, "max_batch": int}   (first line)
    client -> scorer   {"id": u64, "query": str, "passage": str}
    scorer -> client   {"id": u64, "score": f64}

Request ids are client-assigned and strictly increasing per connection;
responses within a batch may arrive out of order but must be a
permutation of the batch's ids. Scores must be finite and inside [0, 1];
anything else raises ProtocolViolation rather than being clamped.

One handle equals one connection and processes batches serially; use
ScorerPool for parallelism across (query, passages) tasks.
"""

from __future__ import annotations

import json
import math
import queue
import shlex
import socket
import subprocess
import threading
import time
from dataclasses import dataclass

from .chunking import Passage
from .corpus import Query
from .errors import (
    EmptyQuery,
    MalformedRecord,
    ProtocolViolation,
    ScorerTimeout,
    ScorerUnavailable,
)
from .index import InvertedIndex
from .textproc import tokenize

DEFAULT_TIMEOUT = 60.0
DEFAULT_TAU = 0.5


def binarize(score: float, tau: float = DEFAULT_TAU) -> bool:
    """Relevant iff score >= tau (boundary inclusive)."""
    if not 0.0 <= score <= 1.0:
        raise ValueError(f"score {score} outside [0, 1]")
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau {tau} outside (0, 1)")
    return score >= tau


class Scorer:
    """Base interface: one relevance score in [0, 1] per passage."""

    name = "scorer"
    thread_safe = True  # pure in-process scorers; connections override

    def score_batch(self, query: Query, passages: list[Passage]) -> list[float]:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class LexicalScorer(Scorer):
    """BM25 of the query against the passage text, using corpus-level
    document frequencies, squashed to [0, 1) via s / (1 + s)."""

    name = "lexical"

    def __init__(self, index: InvertedIndex, k1: float = 0.9, b: float = 0.4):
        self.index = index
        self.k1 = k1
        self.b = b

    def score_batch(self, query: Query, passages: list[Passage]) -> list[float]:
        terms = [t.text for t in tokenize(query.text)]
        if not terms:
            raise EmptyQuery(f"query {query.id} has no tokens")
        n = self.index.doc_count
        avgdl = self.index.avg_doc_length
        out = []
        for p in passages:
            counts: dict[str, int] = {}
            for tok in tokenize(p.text):
                counts[tok.text] = counts.get(tok.text, 0) + 1
            length = sum(counts.values())
            s = 0.0
            for t in terms:
                df = self.index.df(t)
                tf = counts.get(t, 0)
                if df == 0 or tf == 0 or avgdl == 0:
                    continue
                idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
                s += idf * tf * (self.k1 + 1.0) / (tf + self.k1 * (1.0 - self.b + self.b * length / avgdl))
            out.append(s / (1.0 + s))
        return out


class OracleScorer(Scorer):
    """1.0 for passages marked relevant in a passage-qrels file, else 0.0.

    Passage-qrels lines are "qid doc_id passage_index grade"
    (whitespace-separated, grade > 0 means relevant).
    """

    name = "oracle"

    def __init__(self, relevant: set[tuple[str, str, int]]):
        self.relevant = relevant

    @classmethod
    def from_file(cls, path: str) -> "OracleScorer":
        return cls(load_passage_qrels(path))

    def score_batch(self, query: Query, passages: list[Passage]) -> list[float]:
        return [
            1.0 if (query.id, p.doc_id, p.index) in self.relevant else 0.0
            for p in passages
        ]


def load_passage_qrels(path: str) -> set[tuple[str, str, int]]:
    relevant: set[tuple[str, str, int]] = set()
    with open(path, encoding="utf-8") as f:
        for no, line in enumerate(f.read().splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 4:
                raise MalformedRecord(path, no, f"expected 4 fields, got {len(parts)}")
            qid, did, pindex_s, grade_s = parts
            try:
                pindex, grade = int(pindex_s), int(grade_s)
            except ValueError:
                raise MalformedRecord(path, no, "passage_index and grade must be integers") from None
            if grade > 0:
                relevant.add((qid, did, pindex))
    return relevant


def write_passage_qrels(relevant: set[tuple[str, str, int]], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for qid, did, pindex in sorted(relevant):
            f.write(f"{qid} {did} {pindex} 1\n")


# ---------------------------------------------------------------------------
# External scorer client


class _LineTransport:
    """Reads lines on a background thread so receives can time out."""

    def __init__(self):
        self._queue: queue.Queue[str | None] = queue.Queue()
        self._reader: threading.Thread | None = None

    def _start_reader(self, stream) -> None:
        def pump():
            try:
                for line in stream:
                    self._queue.put(line.rstrip("\n"))
            except (OSError, ValueError):
                pass
            self._queue.put(None)

        self._reader = threading.Thread(target=pump, daemon=True)
        self._reader.start()

    def recv_line(self, timeout: float) -> str:
        try:
            line = self._queue.get(timeout=timeout)
        except queue.Empty:
            raise ScorerTimeout(f"no response within {timeout:.1f}s") from None
        if line is None:
            raise ScorerUnavailable("scorer closed the stream")
        return line

    def send_line(self, line: str) -> None:
        raise NotImplementedError

    def close(self) -> None:
        pass


class _StdioTransport(_LineTransport):
    def __init__(self, command: str):
        super().__init__()
        try:
            self._proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as e:
            raise ScorerUnavailable(f"cannot start scorer process {command!r}: {e}") from e
        self._start_reader(self._proc.stdout)

    def send_line(self, line: str) -> None:
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (OSError, ValueError) as e:
            raise ScorerUnavailable(f"scorer process pipe broken: {e}") from e

    def close(self) -> None:
        try:
            if self._proc.stdin:
                self._proc.stdin.close()
            self._proc.wait(timeout=5)
        except (OSError, subprocess.TimeoutExpired):
            self._proc.kill()


class _TcpTransport(_LineTransport):
    def __init__(self, host: str, port: int, connect_timeout: float = 10.0):
        super().__init__()
        try:
            self._sock = socket.create_connection((host, port), timeout=connect_timeout)
        except OSError as e:
            raise ScorerUnavailable(f"cannot connect to scorer at {host}:{port}: {e}") from e
        self._sock.settimeout(None)
        self._file = self._sock.makefile("rw", encoding="utf-8", newline="\n")
        self._start_reader(self._file)

    def send_line(self, line: str) -> None:
        try:
            self._file.write(line + "\n")
            self._file.flush()
        except OSError as e:
            raise ScorerUnavailable(f"scorer connection broken: {e}") from e

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


@dataclass(frozen=True)
class ScorerInfo:
    name: str
    version: str
    max_batch: int


class ExternalScorer(Scorer):
    """Client for a scorer process speaking the line-delimited protocol."""

    thread_safe = False  # one connection processes batches serially

    def __init__(self, transport: _LineTransport, timeout: float = DEFAULT_TIMEOUT):
        self.transport = transport
        self.timeout = timeout
        self._next_id = 0
        self.info = self._handshake()
        self.name = f"external:{self.info.name}"

    @classmethod
    def spawn(cls, command: str, timeout: float = DEFAULT_TIMEOUT) -> "ExternalScorer":
        return cls(_StdioTransport(command), timeout=timeout)

    @classmethod
    def connect(cls, host: str, port: int, timeout: float = DEFAULT_TIMEOUT) -> "ExternalScorer":
        return cls(_TcpTransport(host, port), timeout=timeout)

    def _handshake(self) -> ScorerInfo:
        line = self.transport.recv_line(self.timeout)
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            raise ProtocolViolation(f"handshake is not JSON: {line!r}") from None
        if not isinstance(obj, dict) or "hello" not in obj or "max_batch" not in obj:
            raise ProtocolViolation(f"handshake missing hello/max_batch: {line!r}")
        max_batch = obj["max_batch"]
        if not isinstance(max_batch, int) or max_batch < 1:
            raise ProtocolViolation(f"invalid max_batch {max_batch!r}")
        return ScorerInfo(
            name=str(obj["hello"]),
            version=str(obj.get("version", "")),
            max_batch=max_batch,
        )

    def score_batch(self, query: Query, passages: list[Passage]) -> list[float]:
        scores: list[float] = []
        step = self.info.max_batch
        for lo in range(0, len(passages), step):
            scores.extend(self._score_chunk(query, passages[lo:lo + step]))
        return scores

    def _score_chunk(self, query: Query, passages: list[Passage]) -> list[float]:
        ids = []
        for p in passages:
            req_id = self._next_id
            self._next_id += 1
            ids.append(req_id)
            self.transport.send_line(json.dumps(
                {"id": req_id, "query": query.text, "passage": p.text},
                ensure_ascii=False,
            ))
        expected = set(ids)
        got: dict[int, float] = {}
        deadline = time.monotonic() + self.timeout
        while len(got) < len(ids):
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise ScorerTimeout(f"batch of {len(ids)} not answered within {self.timeout:.1f}s")
            line = self.transport.recv_line(remaining)
            rid, score = self._parse_response(line, expected, got)
            got[rid] = score
        return [got[i] for i in ids]

    @staticmethod
    def _parse_response(
        line: str, expected: set[int], seen: dict[int, float]
    ) -> tuple[int, float]:
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            raise ProtocolViolation(f"response is not JSON: {line!r}") from None
        if not isinstance(obj, dict) or "id" not in obj:
            raise ProtocolViolation(f"response without id: {line!r}")
        if "error" in obj:
            raise ProtocolViolation(f"scorer reported error for id {obj['id']}: {obj['error']}")
        rid = obj["id"]
        if not isinstance(rid, int) or rid not in expected or rid in seen:
            raise ProtocolViolation(f"unexpected response id {rid!r}")
        score = obj.get("score")
        if not isinstance(score, (int, float)) or isinstance(score, bool):
            raise ProtocolViolation(f"non-numeric score for id {rid}: {score!r}")
        score = float(score)
        if not math.isfinite(score) or not 0.0 <= score <= 1.0:
            raise ProtocolViolation(f"score {score} for id {rid} outside [0, 1]")
        return rid, score

    def close(self) -> None:
        self.transport.close()


# ---------------------------------------------------------------------------
# Factory and pool


def make_scorer(
    spec: str,
    index: InvertedIndex | None = None,
    timeout: float = DEFAULT_TIMEOUT,
) -> Scorer:
    """Build a scorer from a CLI-style spec string.

    lexical | oracle:<passage-qrels path> | exec:<command> | tcp:<host:port>
    """
    if spec == "lexical":
        if index is None:
            raise ValueError("lexical scorer needs an index for corpus statistics")
        return LexicalScorer(index)
    if spec.startswith("oracle:"):
        return OracleScorer.from_file(spec[len("oracle:"):])
    if spec.startswith("exec:"):
        return ExternalScorer.spawn(spec[len("exec:"):], timeout=timeout)
    if spec.startswith("tcp:"):
        host, _, port = spec[len("tcp:"):].rpartition(":")
        if not host or not port.isdigit():
            raise ValueError(f"tcp scorer spec must be tcp:<host>:<port>, got {spec!r}")
        return ExternalScorer.connect(host, int(port), timeout=timeout)
    raise ValueError(f"unknown scorer spec {spec!r}")


class ScorerPool:
    """Fan (query, passages) tasks across a fixed set of handles.

    Results are returned in task order, so downstream output does not
    depend on scheduling. A pool over one in-process scorer degenerates
    to serial calls.
    """

    def __init__(self, scorers: list[Scorer]):
        if not scorers:
            raise ValueError("pool needs at least one scorer")
        self.scorers = scorers

    @classmethod
    def build(
        cls,
        spec: str,
        size: int = 1,
        index: InvertedIndex | None = None,
        timeout: float = DEFAULT_TIMEOUT,
    ) -> "ScorerPool":
        # Only external scorers gain from multiple handles; in-process
        # scorers are pure and shared.
        if spec.startswith(("exec:", "tcp:")) and size > 1:
            return cls([make_scorer(spec, index, timeout) for _ in range(size)])
        return cls([make_scorer(spec, index, timeout)])

    def score_tasks(
        self, tasks: list[tuple[Query, list[Passage]]], threads: int = 1
    ) -> list[list[float]]:
        results: list[list[float] | None] = [None] * len(tasks)
        # A shared pure scorer may be driven by `threads` workers; external
        # handles serialize per connection, so one worker per handle.
        if len(self.scorers) == 1 and self.scorers[0].thread_safe:
            handles = [self.scorers[0]] * max(1, threads)
        else:
            handles = list(self.scorers)

        if len(handles) == 1 or len(tasks) <= 1:
            scorer = handles[0]
            for i, (q, ps) in enumerate(tasks):
                results[i] = scorer.score_batch(q, ps) if ps else []
            return results  # type: ignore[return-value]

        task_queue: queue.Queue[int] = queue.Queue()
        for i in range(len(tasks)):
            task_queue.put(i)
        errors: list[Exception] = []

        def worker(scorer: Scorer):
            while not errors:
                try:
                    i = task_queue.get_nowait()
                except queue.Empty:
                    return
                q, ps = tasks[i]
                try:
                    results[i] = scorer.score_batch(q, ps) if ps else []
                except Exception as e:  # propagate after join
                    errors.append(e)
                    return

        workers = [threading.Thread(target=worker, args=(s,)) for s in handles]
        for w in workers:
            w.start()
        for w in workers:
            w.join()
        if errors:
            raise errors[0]
        return results  # type: ignore[return-value]

    def close(self) -> None:
        for s in self.scorers:
            s.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
