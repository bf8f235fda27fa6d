#!/usr/bin/env python3
"""Selective passage labeling versus whole-document label transfer.

A relevant document usually answers the query in only a few of its
passages. Copying the document label onto every passage (doc_transfer)
therefore manufactures noisy positives; filtering passages through a
teacher scorer keeps only the ones the teacher believes in. This demo
plants the "truly relevant" passages, runs both policies, and compares
their training sets.
"""

from telerank.corpus import Document, Qrels, Query
from telerank.chunking import chunk_sentence_complete, prepare_document
from telerank.labeling import LabelingPolicy, label_passages, sample_negatives
from telerank.scoring import OracleScorer

queries = [Query("q-flood", "river flooding damage")]

# One relevant document (three passages, only the middle one on topic)
# and two retrieved non-relevant documents.
rel_body = (
    " ".join(f"intro{i}" for i in range(12)) + ". "
    + "the river flooding caused severe damage to bridges and roads downstream. "
    + " ".join(f"outro{i}" for i in range(12)) + "."
)
documents = [
    Document(id="d-rel", body=rel_body),
    Document(id="d-miss1", body=" ".join(f"noise{i}" for i in range(30)) + "."),
    Document(id="d-miss2", body=" ".join(f"other{i}" for i in range(30)) + "."),
]

passages = {
    d.id: chunk_sentence_complete(prepare_document(d), target_len=10) for d in documents
}
qrels = Qrels({("q-flood", "d-rel"): 1, ("q-flood", "d-miss1"): 0, ("q-flood", "d-miss2"): 0})
candidates = {"q-flood": [d.id for d in documents]}

print(f"relevant document has {len(passages['d-rel'])} passages;"
      " only passage 1 actually answers the query\n")

# the teacher here is an oracle marking the planted passage
teacher = OracleScorer({("q-flood", "d-rel", 1)})

for policy in (LabelingPolicy(kind="doc_transfer"), LabelingPolicy(kind="teacher", tau=0.5)):
    pool = label_passages(queries, candidates, passages, qrels, policy,
                          scorer=teacher if policy.kind == "teacher" else None)
    print(f"policy = {policy.kind}")
    print(f"  positives: {[(i.doc_id, i.passage_index) for i in pool.positives]}")
    print(f"  discarded passages of relevant docs: {pool.stats.n_discarded}")
    print(f"  negative candidates: {pool.stats.n_negative_candidates}")
    training = sample_negatives(pool, seed=123)
    print(f"  balanced training set: {len(training.positives())} positive"
          f" / {len(training.negatives())} negative\n")

print("doc_transfer produced two spurious positives (the intro and outro")
print("passages); the teacher kept exactly the planted one, and balancing")
print("shrank the training set accordingly.")
