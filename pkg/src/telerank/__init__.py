"""Telescoping document reranking toolkit.

First-stage lexical retrieval (query likelihood / BM25) over an inverted
index, sentence-aware passage chunking, selective passage labeling for
training-set construction, passage-score aggregation back to document
rankings, and TREC-style evaluation with significance testing. Neural
scoring is delegated to external processes behind a line-delimited JSON
protocol; built-in lexical and oracle scorers cover everything else.
"""

__version__ = "0.1.0"

from . import (  # noqa: F401
    aggregation,
    chunking,
    corpus,
    errors,
    index,
    labeling,
    metrics,
    scoring,
    textproc,
)
