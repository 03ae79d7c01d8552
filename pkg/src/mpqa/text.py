"""String normalization shared by indexing, scoring and evaluation."""

from __future__ import annotations

import re
import string
import unicodedata
from collections import Counter
from functools import lru_cache
from typing import Iterable

_ASCII_PUNCT = frozenset(string.punctuation)


@lru_cache(maxsize=None)
def is_punct(ch: str) -> bool:
    """Unicode "P*" category, plus ASCII string.punctuation.

    The ASCII set keeps behaviour identical to the reference SQuAD script
    on ASCII input (it also strips symbols such as $, +, <).
    """
    return ch in _ASCII_PUNCT or unicodedata.category(ch).startswith("P")


_ARTICLES_RE = re.compile(r"\b(a|an|the)\b")


@lru_cache(maxsize=1 << 16)
def term(surface: str) -> str:
    """Index/query term for one whitespace token: case-folded, edge punctuation stripped.

    May return "" for punctuation-only tokens; callers drop those.
    """
    s = surface.casefold()
    i, j = 0, len(s)
    while i < j and is_punct(s[i]):
        i += 1
    while j > i and is_punct(s[j - 1]):
        j -= 1
    return s[i:j]


def terms(surfaces: Iterable[str]) -> list[str]:
    return [t for t in map(term, surfaces) if t]


def term_set(text_or_surfaces) -> set[str]:
    if isinstance(text_or_surfaces, str):
        text_or_surfaces = text_or_surfaces.split()
    return set(terms(text_or_surfaces))


def normalize_answer(s: str) -> str:
    """Lower-case, drop punctuation, drop articles, collapse whitespace."""
    s = s.lower()
    s = "".join(ch for ch in s if not is_punct(ch))
    s = _ARTICLES_RE.sub(" ", s)
    return " ".join(s.split())


def em_f1(prediction: str, golds: Iterable[str]) -> tuple[int, float]:
    golds = list(golds)
    if not golds:
        raise ValueError("em_f1 needs at least one gold answer")
    pred_norm = normalize_answer(prediction)
    pred_toks = pred_norm.split()
    em = 0
    f1 = 0.0
    for g in golds:
        g_norm = normalize_answer(g)
        if pred_norm == g_norm:
            em = 1
        f1 = max(f1, _token_f1(pred_toks, g_norm.split()))
    return em, f1


def _token_f1(pred: list[str], gold: list[str]) -> float:
    if not pred and not gold:
        return 1.0
    if not pred or not gold:
        return 0.0
    same = sum((Counter(pred) & Counter(gold)).values())
    if same == 0:
        return 0.0
    p = same / len(pred)
    r = same / len(gold)
    return 2 * p * r / (p + r)
