"""Hot inner loops, compiled with numba when available.

Set ``MPQA_DISABLE_NUMBA=1`` to force the pure-numpy path (useful for
debugging and for environments without numba). Both paths are kept
importable under explicit names so they can be compared directly.
"""

import os

import numpy as np

_DISABLE = os.environ.get("MPQA_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLE:
        raise ImportError("numba disabled by MPQA_DISABLE_NUMBA")
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False


# ---------------------------------------------------------------------------
# BM25 posting accumulation
# ---------------------------------------------------------------------------


def bm25_accumulate_numpy(scores, doc_idx, tfs, idf, doc_len, avg_len, k1, b):
    """Add one term's BM25 contribution to ``scores`` in place.

    ``doc_idx`` indexes ``scores``/``doc_len`` and holds no duplicates
    (one posting per passage per term).
    """
    tf = tfs.astype(np.float64)
    norm = k1 * (1.0 - b + b * doc_len[doc_idx] / avg_len)
    scores[doc_idx] += idf * tf * (k1 + 1.0) / (tf + norm)


def _bm25_accumulate_py(scores, doc_idx, tfs, idf, doc_len, avg_len, k1, b):
    for j in range(doc_idx.shape[0]):
        d = doc_idx[j]
        tf = float(tfs[j])
        norm = k1 * (1.0 - b + b * doc_len[d] / avg_len)
        scores[d] += idf * tf * (k1 + 1.0) / (tf + norm)


# ---------------------------------------------------------------------------
# Span enumeration
# ---------------------------------------------------------------------------


def span_table_numpy(start_lp, end_lp, offsets, max_len):
    """All legal spans over concatenated per-passage log-prob vectors.

    ``start_lp``/``end_lp`` are the concatenation of every passage's
    ``L+1`` vector (sentinel first); ``offsets[i]`` is where passage
    ``i`` begins, ``offsets[-1]`` the total length.

    Returns ``(passage, start, end, logscore)`` arrays with 1-based
    token positions, in (passage, start, end) lexicographic order.
    """
    out_p, out_s, out_e, out_v = [], [], [], []
    for i in range(offsets.shape[0] - 1):
        lo, hi = offsets[i], offsets[i + 1]
        n = hi - lo - 1
        if n <= 0:
            continue
        s = np.arange(1, n + 1)
        width = np.arange(min(max_len, n))
        e = s[:, None] + width[None, :]
        ok = e <= n
        ss = np.broadcast_to(s[:, None], e.shape)[ok]
        ee = e[ok]
        out_p.append(np.full(ss.shape[0], i, dtype=np.int64))
        out_s.append(ss.astype(np.int64))
        out_e.append(ee.astype(np.int64))
        out_v.append(start_lp[lo + ss] + end_lp[lo + ee])
    if not out_p:
        empty_i = np.zeros(0, dtype=np.int64)
        return empty_i, empty_i.copy(), empty_i.copy(), np.zeros(0, dtype=np.float64)
    return (
        np.concatenate(out_p),
        np.concatenate(out_s),
        np.concatenate(out_e),
        np.concatenate(out_v),
    )


def _span_table_py(start_lp, end_lp, offsets, max_len):
    n_pass = offsets.shape[0] - 1
    total = 0
    for i in range(n_pass):
        n = offsets[i + 1] - offsets[i] - 1
        for s in range(1, n + 1):
            total += min(max_len, n - s + 1)
    out_p = np.empty(total, dtype=np.int64)
    out_s = np.empty(total, dtype=np.int64)
    out_e = np.empty(total, dtype=np.int64)
    out_v = np.empty(total, dtype=np.float64)
    k = 0
    for i in range(n_pass):
        lo = offsets[i]
        n = offsets[i + 1] - lo - 1
        for s in range(1, n + 1):
            last = min(n, s + max_len - 1)
            for e in range(s, last + 1):
                out_p[k] = i
                out_s[k] = s
                out_e[k] = e
                out_v[k] = start_lp[lo + s] + end_lp[lo + e]
                k += 1
    return out_p, out_s, out_e, out_v


if HAS_NUMBA:
    bm25_accumulate_numba = njit(cache=True)(_bm25_accumulate_py)
    span_table_numba = njit(cache=True)(_span_table_py)
    bm25_accumulate = bm25_accumulate_numba
    span_table = span_table_numba
    BACKEND = "numba"
else:
    bm25_accumulate_numba = None
    span_table_numba = None
    bm25_accumulate = bm25_accumulate_numpy
    span_table = span_table_numpy
    BACKEND = "numpy"
