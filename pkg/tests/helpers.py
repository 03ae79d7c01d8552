from mpqa.corpus import Document, Passage, tokenize
from mpqa.scorer import SpanLogits

import numpy as np


def make_passage(text, pid="p", doc_id="d"):
    return Passage(pid, doc_id, tuple(tokenize(text)), 0, text)


def words_doc(n, doc_id="doc"):
    return Document(doc_id, "", " ".join(f"w{i}" for i in range(n)))


def logits(pid, start, end, passage_logit=0.0):
    return SpanLogits(pid, np.asarray(start, dtype=float), np.asarray(end, dtype=float), passage_logit)


def random_logits(rng, n_passages, max_len=20, scale=3.0):
    out = []
    for i in range(n_passages):
        n = int(rng.integers(1, max_len + 1))
        out.append(logits(f"p{i:02d}", rng.normal(0, scale, n + 1), rng.normal(0, scale, n + 1), float(rng.normal())))
    return out
