"""From raw span logits to ranked, merged answers.

Two normalization models are supported. ``PER_PASSAGE`` log-softmaxes every
passage's start and end logits on its own (sentinel included unless masked),
so scores from different passages live on different scales. ``GLOBAL``
log-softmaxes once over every non-sentinel position of every passage of the
question, which makes span scores comparable across passages.

All arithmetic is in log space; probabilities appear only at the API edge.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from . import _kernels
from .corpus import Passage
from .scorer import SpanLogits
from .text import normalize_answer

DEFAULT_MAX_SPAN_LEN = 30


class NormalizationMode(str, enum.Enum):
    PER_PASSAGE = "per-passage"
    GLOBAL = "global"


class NoPositivePassageError(ValueError):
    pass


def logsumexp(x: np.ndarray) -> float:
    m = np.max(x)
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.sum(np.exp(x - m))))


def log_softmax(x: np.ndarray) -> np.ndarray:
    return x - logsumexp(x)


@dataclass(frozen=True, eq=False)
class SpanDistribution:
    """Start/end log-probabilities aligned with each passage's logit positions.

    Masked sentinel entries hold ``-inf``.
    """

    passage_ids: tuple[str, ...]
    start_logprob: tuple[np.ndarray, ...]
    end_logprob: tuple[np.ndarray, ...]
    mode: NormalizationMode
    sentinel_masked: bool

    def __len__(self) -> int:
        return len(self.passage_ids)

    def mass(self) -> list[tuple[float, float]]:
        """Total start/end probability per normalization group."""
        if self.mode is NormalizationMode.GLOBAL:
            s = math.fsum(float(np.exp(v).sum()) for v in self.start_logprob)
            e = math.fsum(float(np.exp(v).sum()) for v in self.end_logprob)
            return [(s, e)]
        return [(float(np.exp(s).sum()), float(np.exp(e).sum())) for s, e in zip(self.start_logprob, self.end_logprob)]


def _check_finite(lg: SpanLogits) -> None:
    if not (np.isfinite(lg.start_logits).all() and np.isfinite(lg.end_logits).all()):
        raise ValueError(f"non-finite logits for passage {lg.passage_id!r}")
    if lg.start_logits.shape != lg.end_logits.shape or lg.start_logits.shape[0] < 2:
        raise ValueError(f"malformed logits for passage {lg.passage_id!r}")


def _masked_log_softmax(z: np.ndarray, mask_sentinel: bool) -> np.ndarray:
    if not mask_sentinel:
        return log_softmax(z)
    out = np.empty_like(z)
    out[0] = -np.inf
    out[1:] = log_softmax(z[1:])
    return out


def normalize_per_passage(logits: SpanLogits | Sequence[SpanLogits], mask_sentinel: bool = False) -> SpanDistribution:
    if isinstance(logits, SpanLogits):
        logits = [logits]
    for lg in logits:
        _check_finite(lg)
    return SpanDistribution(
        tuple(lg.passage_id for lg in logits),
        tuple(_masked_log_softmax(lg.start_logits, mask_sentinel) for lg in logits),
        tuple(_masked_log_softmax(lg.end_logits, mask_sentinel) for lg in logits),
        NormalizationMode.PER_PASSAGE,
        mask_sentinel,
    )


def normalize_global(all_logits: Sequence[SpanLogits]) -> SpanDistribution:
    if not all_logits:
        raise ValueError("global normalization needs at least one passage")
    for lg in all_logits:
        _check_finite(lg)
    z_start = logsumexp(np.concatenate([lg.start_logits[1:] for lg in all_logits]))
    z_end = logsumexp(np.concatenate([lg.end_logits[1:] for lg in all_logits]))
    starts, ends = [], []
    for lg in all_logits:
        s = lg.start_logits - z_start
        e = lg.end_logits - z_end
        s[0] = e[0] = -np.inf
        starts.append(s)
        ends.append(e)
    return SpanDistribution(
        tuple(lg.passage_id for lg in all_logits), tuple(starts), tuple(ends), NormalizationMode.GLOBAL, True
    )


def normalize(all_logits: Sequence[SpanLogits], mode: NormalizationMode | str, mask_sentinel: bool = False) -> SpanDistribution:
    if NormalizationMode(mode) is NormalizationMode.GLOBAL:
        return normalize_global(all_logits)
    return normalize_per_passage(all_logits, mask_sentinel=mask_sentinel)


# ---------------------------------------------------------------------------
# candidates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnswerCandidate:
    text: str
    passage_id: str
    a_s: int
    a_e: int
    log_score: float

    @property
    def score(self) -> float:
        return math.exp(self.log_score)


def enumerate_spans(
    dist: SpanDistribution,
    max_span_len: int = DEFAULT_MAX_SPAN_LEN,
    top_n: int = 20,
    passages: Mapping[str, Passage] | None = None,
) -> list[AnswerCandidate]:
    """Best ``top_n`` spans lying inside one passage, scored Ps(a_s) * Pe(a_e).

    Positions are 1-based token indices (0 is the sentinel and is never
    emitted). Ties go to (passage_id, a_s, a_e) ascending. Text is cut from
    the source document when ``passages`` is given, otherwise left empty.
    """
    if top_n < 1 or max_span_len < 1:
        raise ValueError("top_n and max_span_len must be >= 1")
    if len(dist) == 0:
        return []
    sizes = np.array([v.shape[0] for v in dist.start_logprob], dtype=np.int64)
    offsets = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
    start = np.concatenate(dist.start_logprob)
    end = np.concatenate(dist.end_logprob)
    pidx, s, e, v = _kernels.span_table(start, end, offsets, int(max_span_len))
    if v.shape[0] == 0:
        return []
    pid_rank = np.argsort(np.argsort(np.array(dist.passage_ids, dtype=object), kind="stable"), kind="stable")
    keep = np.isfinite(v)
    pidx, s, e, v = pidx[keep], s[keep], e[keep], v[keep]
    order = np.lexsort((e, s, pid_rank[pidx], -v))[:top_n]
    out = []
    for j in order:
        pid = dist.passage_ids[pidx[j]]
        a_s, a_e = int(s[j]), int(e[j])
        text = passages[pid].span_text(a_s - 1, a_e - 1) if passages is not None else ""
        out.append(AnswerCandidate(text, pid, a_s, a_e, float(v[j])))
    return out


def combine_passage_score(candidate: AnswerCandidate, posterior) -> AnswerCandidate:
    """Multiply a span score by its passage's posterior probability."""
    try:
        lp = posterior.log_prob(candidate.passage_id)
    except KeyError:
        raise KeyError(f"passage {candidate.passage_id!r} not in passage posterior") from None
    return replace(candidate, log_score=candidate.log_score + lp)


@dataclass(frozen=True)
class AnswerGroup:
    key: str
    total_score: float
    candidates: tuple[AnswerCandidate, ...]

    @property
    def text(self) -> str:
        """Surface form of the best-scoring member."""
        return self.candidates[0].text

    @property
    def passage_ids(self) -> list[str]:
        return list(dict.fromkeys(c.passage_id for c in self.candidates))


def merge_answers(candidates: Sequence[AnswerCandidate]) -> list[AnswerGroup]:
    groups: dict[str, list[AnswerCandidate]] = {}
    for c in candidates:
        groups.setdefault(normalize_answer(c.text), []).append(c)
    merged = []
    for key, members in groups.items():
        members.sort(key=lambda c: (-c.log_score, c.passage_id, c.a_s, c.a_e))
        merged.append(AnswerGroup(key, math.fsum(c.score for c in members), tuple(members)))
    merged.sort(key=lambda g: (-g.total_score, g.key))
    return merged


# ---------------------------------------------------------------------------
# training loss
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GoldSpan:
    passage_id: str
    a_s: int
    a_e: int


def _head_nll(z: np.ndarray, targets: np.ndarray, valid: np.ndarray) -> tuple[float, np.ndarray]:
    """-log sum_{t in targets} softmax(z over valid)_t and its gradient.

    Gradient is softmax(z) minus softmax restricted to the targets; entries
    outside ``valid`` get zero.
    """
    zv = z[valid]
    lse_all = logsumexp(zv)
    lse_t = logsumexp(z[targets])
    grad = np.zeros_like(z)
    grad[valid] = np.exp(zv - lse_all)
    grad[targets] -= np.exp(z[targets] - lse_t)
    return lse_all - lse_t, grad


def span_nll_and_grad(
    all_logits: Sequence[SpanLogits],
    golds: Sequence[GoldSpan],
    mode: NormalizationMode | str,
) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Negative log-likelihood of gold start/end positions, with its gradient.

    Several gold occurrences are marginalized: each head's likelihood is the
    summed probability of its distinct target positions. In per-passage mode
    a passage without gold occurrences targets the sentinel and the loss is
    summed over passages. In global mode sentinels are excluded from the
    softmax (their gradient is zero) and golds must be non-empty.

    Returns ``(loss, [(d_start, d_end) per passage])``.
    """
    mode = NormalizationMode(mode)
    if not all_logits:
        raise ValueError("no passages")
    for lg in all_logits:
        _check_finite(lg)
    by_pid = {lg.passage_id: i for i, lg in enumerate(all_logits)}
    s_targets: list[set[int]] = [set() for _ in all_logits]
    e_targets: list[set[int]] = [set() for _ in all_logits]
    for g in golds:
        if g.passage_id not in by_pid:
            raise ValueError(f"gold span refers to unknown passage {g.passage_id!r}")
        i = by_pid[g.passage_id]
        n = all_logits[i].n_tokens
        if not 1 <= g.a_s <= g.a_e <= n:
            raise ValueError(f"gold span ({g.a_s}, {g.a_e}) invalid for passage {g.passage_id!r} of {n} tokens")
        s_targets[i].add(g.a_s)
        e_targets[i].add(g.a_e)

    if mode is NormalizationMode.PER_PASSAGE:
        loss = 0.0
        grads = []
        for lg, st, et in zip(all_logits, s_targets, e_targets):
            valid = np.ones(lg.start_logits.shape[0], dtype=bool)
            ls, gs = _head_nll(lg.start_logits, np.array(sorted(st or {0})), valid)
            le, ge = _head_nll(lg.end_logits, np.array(sorted(et or {0})), valid)
            loss += ls + le
            grads.append((gs, ge))
        return loss, grads

    if not golds:
        raise NoPositivePassageError("no positive passage: global normalization needs at least one gold span")
    sizes = [lg.start_logits.shape[0] for lg in all_logits]
    offsets = np.concatenate(([0], np.cumsum(sizes)))
    z_s = np.concatenate([lg.start_logits for lg in all_logits])
    z_e = np.concatenate([lg.end_logits for lg in all_logits])
    valid = np.ones(z_s.shape[0], dtype=bool)
    valid[offsets[:-1]] = False
    t_s = np.array(sorted(offsets[i] + t for i, st in enumerate(s_targets) for t in st))
    t_e = np.array(sorted(offsets[i] + t for i, et in enumerate(e_targets) for t in et))
    ls, gs = _head_nll(z_s, t_s, valid)
    le, ge = _head_nll(z_e, t_e, valid)
    grads = [(gs[offsets[i] : offsets[i + 1]], ge[offsets[i] : offsets[i + 1]]) for i in range(len(all_logits))]
    return ls + le, grads
