"""Exception types shared across the toolkit.

Loaders reject structural violations instead of repairing them; every
parse error carries enough context (path, line number) to locate the
offending record.
"""

from __future__ import annotations


class TelerankError(Exception):
    """Base class for all toolkit errors."""


class MalformedRecord(TelerankError):
    """A line or record does not match the expected file format."""

    def __init__(self, path: str, line_no: int, detail: str):
        super().__init__(f"{path}:{line_no}: {detail}")
        self.path = path
        self.line_no = line_no
        self.detail = detail


class DuplicateDocId(TelerankError):
    """Two documents in one corpus share an id (first duplicate reported)."""

    def __init__(self, doc_id: str):
        super().__init__(f"duplicate document id: {doc_id!r}")
        self.doc_id = doc_id


class NegativeGrade(TelerankError):
    """A relevance judgment carries a grade below zero."""


class RankGap(TelerankError):
    """Ranks within one query of a run are not consecutive from 1."""


class NonMonotonicScore(TelerankError):
    """Scores within one query of a run increase with rank."""


class TooFewQueries(TelerankError):
    """Fewer query ids than requested folds."""


class EmptyQuery(TelerankError):
    """Query text tokenizes to zero tokens."""


class NoPassages(TelerankError):
    """Aggregation requested over an empty passage-score sequence."""


class MissingFirstStageScore(TelerankError):
    """Interpolated aggregation requires a first-stage score."""


class MissingScorer(TelerankError):
    """Teacher labeling policy requires a scorer handle."""


class ScorerUnavailable(TelerankError):
    """External scorer process is dead or the handshake failed."""


class ProtocolViolation(TelerankError):
    """External scorer sent an invalid response (bad id, NaN, out of range)."""


class ScorerTimeout(TelerankError):
    """External scorer did not answer within the configured timeout."""


class LeakageDetected(TelerankError):
    """A training instance consumes label signal from a test-fold query."""

    def __init__(self, query_ids):
        ids = sorted(query_ids)
        super().__init__(f"test-fold queries present in training set: {', '.join(ids)}")
        self.query_ids = ids


class NoJudgedQueries(TelerankError):
    """No query under evaluation has a relevant document in the qrels."""


class LengthMismatch(TelerankError):
    """Paired test inputs are not aligned on the same query ids."""


class TooFewPairs(TelerankError):
    """Paired test needs at least two aligned observations."""


class MissingFoldRun(TelerankError):
    """Cross-validation round has no run file."""

    def __init__(self, round_index: int):
        super().__init__(f"no run supplied for cross-validation round {round_index}")
        self.round_index = round_index


class EmptyQuerySet(TelerankError):
    """Benchmark invoked with zero queries."""


class SnapshotVersionMismatch(TelerankError):
    """Index snapshot was written by an incompatible format version."""
