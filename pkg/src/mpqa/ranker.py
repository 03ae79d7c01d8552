"""Passage ranking: listwise posterior, its training loss, a linear ranker.

The linear ranker scores passages from five lexical features and is trained
on the same listwise objective a neural ranker would use: maximize the
(marginal) likelihood of answer-bearing passages under a softmax over the
question's passages.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .aggregate import logsumexp
from .corpus import Passage
from .retrieval import RetrievalHit
from .text import terms

N_FEATURES = 5
FEATURE_NAMES = ("bm25_score", "unigram_overlap_fraction", "bigram_overlap_count", "length_per_100", "bias")
MODEL_FORMAT = "mpqa-linear-ranker"
MODEL_VERSION = 1
TRAIN_TOP = 10


class RankerError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PassagePosterior:
    question_id: str
    passage_ids: tuple[str, ...]
    log_probs: np.ndarray
    _pos: dict = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_pos", {p: i for i, p in enumerate(self.passage_ids)})

    @property
    def m(self) -> int:
        return len(self.passage_ids)

    @property
    def entries(self) -> dict[str, float]:
        return {pid: float(p) for pid, p in zip(self.passage_ids, np.exp(self.log_probs))}

    def log_prob(self, passage_id: str) -> float:
        return float(self.log_probs[self._pos[passage_id]])

    def __getitem__(self, passage_id: str) -> float:
        return math.exp(self.log_prob(passage_id))

    def __contains__(self, passage_id: str) -> bool:
        return passage_id in self._pos


def passage_posterior(logits: Mapping[str, float], question_id: str = "") -> PassagePosterior:
    if not logits:
        raise RankerError("passage posterior needs at least one passage")
    ids = tuple(logits)
    z = np.array([float(logits[p]) for p in ids], dtype=np.float64)
    if not np.isfinite(z).all():
        raise RankerError("non-finite passage logit")
    return PassagePosterior(question_id, ids, z - logsumexp(z))


def ranker_loss_and_grad(logits, positive_mask) -> tuple[float, np.ndarray]:
    """-log of the total softmax probability of the positive passages."""
    z = np.asarray(logits, dtype=np.float64)
    pos = np.asarray(positive_mask, dtype=bool)
    if z.shape != pos.shape or z.ndim != 1:
        raise RankerError("logits and positive_mask must be 1-d and equally long")
    if not pos.any():
        raise RankerError("ranker loss needs at least one positive passage")
    lse_all = logsumexp(z)
    lse_pos = logsumexp(z[pos])
    grad = np.exp(z - lse_all)
    grad[pos] -= np.exp(z[pos] - lse_pos)
    return lse_all - lse_pos, grad


def _bigrams(seq: Sequence[str]) -> set[tuple[str, str]]:
    return set(zip(seq, seq[1:]))


def extract_features(question: str, passage: Passage, bm25_score: float) -> np.ndarray:
    """[bm25, |Q & P| / |Q|, #question bigrams found in passage, words / 100, 1]."""
    q_terms = terms(question.split())
    p_terms = terms(passage.surfaces)
    qset = set(q_terms)
    uni = len(qset & set(p_terms)) / len(qset) if qset else 0.0
    bi = len(_bigrams(q_terms) & _bigrams(p_terms))
    return np.array([float(bm25_score), uni, float(bi), len(passage.tokens) / 100.0, 1.0])


@dataclass
class LinearRankerModel:
    weights: np.ndarray
    epochs: int = 0
    learning_rate: float = 0.0
    seed: int = 0
    history: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (N_FEATURES,) or not np.isfinite(self.weights).all():
            raise RankerError(f"ranker weights must be {N_FEATURES} finite values")

    def logits(self, features: np.ndarray) -> np.ndarray:
        return np.asarray(features, dtype=np.float64) @ self.weights

    def score_hits(self, question: str, hits: Sequence[RetrievalHit], passages: Mapping[str, Passage]) -> dict[str, float]:
        if not hits:
            return {}
        feats = np.stack([extract_features(question, passages[h.passage_id], h.score) for h in hits])
        return {h.passage_id: float(v) for h, v in zip(hits, self.logits(feats))}

    def save(self, path: str | Path) -> None:
        rec = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "features": list(FEATURE_NAMES),
            "weights": self.weights.tolist(),
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "seed": self.seed,
            "history": self.history,
        }
        Path(path).write_text(json.dumps(rec, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "LinearRankerModel":
        try:
            rec = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise RankerError(f"{path}: malformed ranker model ({exc})") from exc
        if rec.get("format") != MODEL_FORMAT:
            raise RankerError(f"{path}: not a ranker model file (format={rec.get('format')!r})")
        if rec.get("version") != MODEL_VERSION:
            raise RankerError(f"{path}: unsupported ranker model version {rec.get('version')!r}")
        return cls(rec["weights"], rec["epochs"], rec["learning_rate"], rec["seed"], rec.get("history", []))


@dataclass(frozen=True, eq=False)
class RankerExample:
    question_id: str
    features: np.ndarray
    positive: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        pos = np.asarray(self.positive, dtype=bool)
        if f.ndim != 2 or f.shape[0] == 0:
            raise RankerError(f"question {self.question_id!r} has no passages")
        if f.shape[1] != N_FEATURES:
            raise RankerError(f"question {self.question_id!r}: expected {N_FEATURES} features, got {f.shape[1]}")
        if pos.shape != (f.shape[0],):
            raise RankerError(f"question {self.question_id!r}: positive mask length mismatch")
        if not np.isfinite(f).all():
            raise RankerError(f"question {self.question_id!r}: non-finite features")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "positive", pos)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 0.5
    seed: int = 0
    batch_size: int | None = None


def mean_ranker_loss(weights: np.ndarray, dataset: Sequence[RankerExample]) -> tuple[float, np.ndarray]:
    total = 0.0
    grad = np.zeros(N_FEATURES)
    for ex in dataset:
        loss, g = ranker_loss_and_grad(ex.features @ weights, ex.positive)
        total += loss
        grad += ex.features.T @ g
    return total / len(dataset), grad / len(dataset)


def train_linear_ranker(
    dataset: Sequence[RankerExample],
    config: TrainConfig = TrainConfig(),
    init: np.ndarray | None = None,
) -> LinearRankerModel:
    """Gradient descent on the mean listwise loss.

    Full-batch steps use backtracking (halve the step until the loss does not
    increase). With ``batch_size`` set, each epoch visits a seeded shuffle of
    the questions in mini-batches. The lowest full-dataset loss seen is kept,
    so the returned loss never exceeds the initial one.
    """
    if not dataset:
        raise RankerError("empty ranker training set")
    for ex in dataset:
        if not ex.positive.any():
            raise RankerError(f"question {ex.question_id!r} has no positive passage")
    w = np.zeros(N_FEATURES) if init is None else np.array(init, dtype=np.float64)
    rng = np.random.default_rng(config.seed)
    loss, grad = mean_ranker_loss(w, dataset)
    best_w, best = w.copy(), loss
    history = [loss]
    lr = config.learning_rate
    for _ in range(config.epochs):
        if config.batch_size is None:
            step = lr
            for _ in range(40):
                cand = w - step * grad
                c_loss, c_grad = mean_ranker_loss(cand, dataset)
                if c_loss <= loss:
                    break
                step /= 2
            else:
                break
            w, loss, grad = cand, c_loss, c_grad
        else:
            order = rng.permutation(len(dataset))
            for lo in range(0, len(order), config.batch_size):
                batch = [dataset[i] for i in order[lo : lo + config.batch_size]]
                _, g = mean_ranker_loss(w, batch)
                w = w - lr * g
            loss, grad = mean_ranker_loss(w, dataset)
        history.append(loss)
        if loss < best:
            best_w, best = w.copy(), loss
    return LinearRankerModel(best_w, config.epochs, config.learning_rate, config.seed, history)


def load_ranker_dataset(path: str | Path) -> list[RankerExample]:
    """Read line-delimited ``{question_id, features, positive}`` records.

    A record is either one passage (``features`` is a flat list, ``positive``
    a bool) or one whole question (list of feature lists, list of bools).
    Passage records of the same question are grouped in file order.
    """
    grouped: dict[str, tuple[list, list]] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                qid = str(rec["question_id"])
                feats, pos = rec["features"], rec["positive"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise RankerError(f"{path}:{lineno}: malformed ranker record ({exc})") from exc
            fl, pl = grouped.setdefault(qid, ([], []))
            if isinstance(pos, list):
                if not feats:
                    raise RankerError(f"{path}:{lineno}: question {qid!r} has no passages")
                fl.extend(feats)
                pl.extend(pos)
            else:
                fl.append(feats)
                pl.append(bool(pos))
    out = []
    for qid, (fl, pl) in grouped.items():
        try:
            out.append(RankerExample(qid, np.array(fl, dtype=np.float64), np.array(pl, dtype=bool)))
        except ValueError as exc:
            raise RankerError(f"{path}: {exc}") from exc
    return out


def write_ranker_dataset(dataset: Iterable[RankerExample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for ex in dataset:
            for row, pos in zip(ex.features, ex.positive):
                f.write(json.dumps({"question_id": ex.question_id, "features": row.tolist(), "positive": bool(pos)}) + "\n")


def select_training_passages(hits: Sequence[RetrievalHit], positives: Iterable[str], top: int = TRAIN_TOP) -> list[str]:
    """Top-``top`` hits plus every positive anywhere in the list, in rank order."""
    positives = set(positives)
    ranked = sorted(hits, key=lambda h: h.rank)
    seen = set()
    out = []
    for i, h in enumerate(ranked):
        if (i < top or h.passage_id in positives) and h.passage_id not in seen:
            seen.add(h.passage_id)
            out.append(h.passage_id)
    return out


@dataclass(frozen=True)
class RankedPassage:
    passage_id: str
    logit: float
    rank: int
    retrieval_rank: int
    retrieval_score: float


def rerank_topk(
    hits: Sequence[RetrievalHit],
    logits: Mapping[str, float] | Callable[[RetrievalHit], float],
    k: int = 30,
    question_id: str = "",
) -> tuple[list[RankedPassage], PassagePosterior]:
    """Re-sort hits by ranker logit and keep the best ``k``.

    Equal logits keep their retrieval order (then passage_id), so a constant
    ranker reproduces the BM25 list. The posterior is renormalized over the
    retained passages only.
    """
    if not hits:
        raise RankerError("nothing to rerank")
    if k < 1:
        raise RankerError(f"k must be >= 1, got {k}")
    score = logits if callable(logits) else (lambda h: float(logits[h.passage_id]))
    scored = [(float(score(h)), h) for h in hits]
    scored.sort(key=lambda x: (-x[0], x[1].rank, x[1].passage_id))
    kept = [RankedPassage(h.passage_id, lg, r, h.rank, h.score) for r, (lg, h) in enumerate(scored[:k], 1)]
    post = passage_posterior({p.passage_id: p.logit for p in kept}, question_id)
    return kept, post
