#!/usr/bin/env python3
"""First-stage retrieval over an in-memory corpus.

Builds an inverted index from a handful of documents, scores them with
Dirichlet-smoothed query likelihood and BM25, and prints both rankings
side by side.
"""

from telerank.corpus import Document, Query
from telerank.index import RetrievalParams, build_index, retrieve, score_bm25, score_ql

documents = [
    Document(id="news-1", title="Storm hits coast",
             body="A severe storm hit the coast on Monday. Flooding closed roads."),
    Document(id="news-2", title="Coastal cleanup",
             body="Volunteers organized a cleanup along the coast after the storm."),
    Document(id="news-3", title="Market report",
             body="Stocks rallied on Monday. Tech shares led the gains."),
    Document(id="news-4", title="Storm season outlook",
             body="Forecasters expect an active storm season. Coastal towns prepare."),
]

index = build_index(documents)
print(f"indexed {index.doc_count} documents, {index.collection_length} tokens")
print(f"df('storm') = {index.df('storm')}, cf('storm') = {index.cf('storm')}")
print()

query = Query(id="q1", text="coast storm")

print("per-document scores")
for doc in documents:
    ql = score_ql(query.text, doc.id, index, mu=100.0)
    bm = score_bm25(query.text, doc.id, index)
    print(f"  {doc.id:8s}  ql = {ql:8.4f}   bm25 = {bm:7.4f}")
print()

for model in ("ql", "bm25"):
    params = RetrievalParams(model=model, mu=100.0, top_k=4)
    entries = retrieve(query, index, params)
    ranking = " > ".join(e.doc_id for e in entries)
    print(f"{model:5s} ranking: {ranking}")

print()
print("note: query likelihood keeps every document as a candidate")
print("(smoothing leaves nonzero mass), BM25 only documents sharing a term.")
