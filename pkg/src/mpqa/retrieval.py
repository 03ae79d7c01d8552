"""Okapi BM25 over passages: index construction, top-k retrieval, persistence.

Index file layout (UTF-8, one JSON value per line)::

    MPQA-INDEX <version>
    {"params": {...}, "n_documents": D, "n_passages": N, "n_terms": T}
    D document lines       {"doc_id", "text"}
    N passage lines        {"passage_id", "doc_id", "word_start", "n_words"[, "tokens"]}
    T posting lines        {"t": term, "p": [passage index, ...], "f": [tf, ...]}
    END <sha256 of every preceding byte>

Passage indices refer to the passage lines in order, which are sorted by
passage_id. ``tokens`` is present only for passages without source text.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import _kernels
from .corpus import Passage, Token, tokenize
from .text import term, terms

MAGIC = "MPQA-INDEX"
FORMAT_VERSION = 1


class IndexFormatError(ValueError):
    pass


class IndexVersionError(IndexFormatError):
    pass


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self):
        if not (self.k1 >= 0 and math.isfinite(self.k1)):
            raise ValueError(f"k1 must be a finite value >= 0, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError(f"b must lie in [0, 1], got {self.b}")


@dataclass(frozen=True)
class RetrievalHit:
    passage_id: str
    score: float
    rank: int


def idf(n_passages: int, df: int) -> float:
    return math.log(1.0 + (n_passages - df + 0.5) / (df + 0.5))


@dataclass
class InvertedIndex:
    params: Bm25Params
    passage_ids: list[str]
    lengths: np.ndarray
    postings: dict[str, tuple[np.ndarray, np.ndarray]]
    passages: dict[str, Passage] = field(default_factory=dict, repr=False)

    @property
    def passage_count(self) -> int:
        return len(self.passage_ids)

    @property
    def avg_doc_len(self) -> float:
        return float(self.lengths.mean())

    @property
    def doc_lengths(self) -> dict[str, int]:
        return {pid: int(n) for pid, n in zip(self.passage_ids, self.lengths)}

    def postings_for(self, t: str) -> list[tuple[str, int]]:
        if t not in self.postings:
            return []
        idx, tf = self.postings[t]
        return [(self.passage_ids[i], int(f)) for i, f in zip(idx, tf)]

    def passage(self, passage_id: str) -> Passage:
        return self.passages[passage_id]


def build_index(passages: Sequence[Passage], params: Bm25Params | None = None) -> InvertedIndex:
    params = params or Bm25Params()
    if not passages:
        raise ValueError("cannot build an index over zero passages")
    by_id: dict[str, Passage] = {}
    for p in passages:
        if p.passage_id in by_id:
            raise ValueError(f"duplicate passage_id {p.passage_id!r}")
        by_id[p.passage_id] = p
    ids = sorted(by_id)
    lengths = np.array([len(by_id[pid].tokens) for pid in ids], dtype=np.float64)
    acc: dict[str, tuple[list[int], list[int]]] = {}
    for i, pid in enumerate(ids):
        for t, tf in Counter(terms(by_id[pid].surfaces)).items():
            lst = acc.setdefault(t, ([], []))
            lst[0].append(i)
            lst[1].append(tf)
    postings = {t: (np.array(ix, dtype=np.int64), np.array(tf, dtype=np.int64)) for t, (ix, tf) in acc.items()}
    return InvertedIndex(params, ids, lengths, postings, by_id)


def query_terms(question: str) -> list[str]:
    """Distinct query terms in sorted order (fixes the summation order)."""
    return sorted({t for t in (term(w) for w in question.split()) if t})


def score_all(index: InvertedIndex, question: str) -> np.ndarray:
    """BM25 score of every passage, aligned with ``index.passage_ids``."""
    scores = np.zeros(index.passage_count, dtype=np.float64)
    n = index.passage_count
    avg = index.avg_doc_len
    k1, b = float(index.params.k1), float(index.params.b)
    for t in query_terms(question):
        post = index.postings.get(t)
        if post is None:
            continue
        doc_idx, tfs = post
        _kernels.bm25_accumulate(scores, doc_idx, tfs, idf(n, doc_idx.shape[0]), index.lengths, avg, k1, b)
    return scores


def retrieve(index: InvertedIndex, question: str, k: int) -> list[RetrievalHit]:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if index.passage_count == 0:
        raise ValueError("index is empty")
    scores = score_all(index, question)
    hit_idx = np.flatnonzero(scores > 0.0)
    # passage_ids are sorted, so index order is the passage_id tie-break
    order = hit_idx[np.lexsort((hit_idx, -scores[hit_idx]))][:k]
    return [RetrievalHit(index.passage_ids[i], float(scores[i]), r) for r, i in enumerate(order, 1)]


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def persist_index(index: InvertedIndex, path: str | Path) -> None:
    docs: dict[str, str] = {}
    passage_lines = []
    for pid in index.passage_ids:
        p = index.passages.get(pid)
        if p is None:
            raise ValueError(f"index has no stored passage for {pid!r}; cannot persist")
        rec = {"passage_id": pid, "doc_id": p.doc_id, "word_start": p.word_start, "n_words": len(p.tokens)}
        if p.doc_text:
            docs.setdefault(p.doc_id, p.doc_text)
        else:
            rec["tokens"] = [[t.surface, t.char_start, t.char_end] for t in p.tokens]
        passage_lines.append(rec)
    header = {
        "params": {"k1": index.params.k1, "b": index.params.b},
        "n_documents": len(docs),
        "n_passages": index.passage_count,
        "n_terms": len(index.postings),
    }
    lines = [f"{MAGIC} {FORMAT_VERSION}", json.dumps(header, sort_keys=True)]
    lines += [json.dumps({"doc_id": d, "text": docs[d]}, ensure_ascii=False) for d in sorted(docs)]
    lines += [json.dumps(r, ensure_ascii=False) for r in passage_lines]
    for t in sorted(index.postings):
        idx, tf = index.postings[t]
        lines.append(json.dumps({"t": t, "p": idx.tolist(), "f": tf.tolist()}, ensure_ascii=False))
    body = ("\n".join(lines) + "\n").encode("utf-8")
    digest = hashlib.sha256(body).hexdigest()
    with open(path, "wb") as f:
        f.write(body)
        f.write(f"END {digest}\n".encode("ascii"))


def load_index(path: str | Path) -> InvertedIndex:
    raw = Path(path).read_bytes()
    first, _, _ = raw.partition(b"\n")
    parts = first.decode("utf-8", "replace").split()
    if len(parts) != 2 or parts[0] != MAGIC:
        raise IndexFormatError(f"{path}: not an index file (bad magic header)")
    if parts[1] != str(FORMAT_VERSION):
        raise IndexVersionError(f"{path}: unsupported index version {parts[1]!r} (expected {FORMAT_VERSION})")
    body, sep, trailer = raw.rstrip(b"\n").rpartition(b"\nEND ")
    if not sep:
        raise IndexFormatError(f"{path}: missing END trailer (file truncated?)")
    body += b"\n"
    if hashlib.sha256(body).hexdigest() != trailer.decode("ascii", "replace").strip():
        raise IndexFormatError(f"{path}: checksum mismatch (file corrupt or truncated)")
    lines = body.decode("utf-8").split("\n")[1:-1]
    try:
        header = json.loads(lines[0])
        params = Bm25Params(**header["params"])
        nd, npass, nt = header["n_documents"], header["n_passages"], header["n_terms"]
        if len(lines) != 1 + nd + npass + nt:
            raise IndexFormatError(f"{path}: record count does not match header")
        docs = {}
        for line in lines[1 : 1 + nd]:
            rec = json.loads(line)
            docs[rec["doc_id"]] = rec["text"]
        doc_tokens: dict[str, list[Token]] = {}
        passages: dict[str, Passage] = {}
        ids = []
        for line in lines[1 + nd : 1 + nd + npass]:
            rec = json.loads(line)
            if "tokens" in rec:
                toks = tuple(Token(s, a, b) for s, a, b in rec["tokens"])
                text = ""
            else:
                text = docs[rec["doc_id"]]
                if rec["doc_id"] not in doc_tokens:
                    doc_tokens[rec["doc_id"]] = tokenize(text)
                ws = rec["word_start"]
                toks = tuple(doc_tokens[rec["doc_id"]][ws : ws + rec["n_words"]])
            if len(toks) != rec["n_words"]:
                raise IndexFormatError(f"{path}: passage {rec['passage_id']!r} does not match its document")
            passages[rec["passage_id"]] = Passage(rec["passage_id"], rec["doc_id"], toks, rec["word_start"], text)
            ids.append(rec["passage_id"])
        postings = {}
        for line in lines[1 + nd + npass :]:
            rec = json.loads(line)
            postings[rec["t"]] = (np.array(rec["p"], dtype=np.int64), np.array(rec["f"], dtype=np.int64))
    except IndexFormatError:
        raise
    except (json.JSONDecodeError, KeyError, TypeError, ValueError, IndexError) as exc:
        raise IndexFormatError(f"{path}: malformed index record ({exc})") from exc
    lengths = np.array([len(passages[pid].tokens) for pid in ids], dtype=np.float64)
    return InvertedIndex(params, ids, lengths, postings, passages)


def passages_from(index: InvertedIndex, hits: Sequence[RetrievalHit]) -> list[Passage]:
    return [index.passages[h.passage_id] for h in hits]


def hits_by_id(hits: Sequence[RetrievalHit]) -> Mapping[str, RetrievalHit]:
    return {h.passage_id: h for h in hits}
