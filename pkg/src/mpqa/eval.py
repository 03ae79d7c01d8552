"""SQuAD-style EM/F1, dataset loading, and the passage-count sweep."""

from __future__ import annotations

import csv
import io
import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .aggregate import NormalizationMode
from .text import em_f1, normalize_answer

__all__ = [
    "MetricReport",
    "QuestionRecord",
    "SweepConfig",
    "SweepRow",
    "em_f1",
    "evaluate_dataset",
    "load_dataset",
    "normalize_answer",
    "split_dataset",
    "sweep_passages",
    "sweep_to_csv",
]

log = logging.getLogger(__name__)


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class QuestionRecord:
    question_id: str
    text: str
    gold_answers: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "gold_answers", tuple(self.gold_answers))
        if not self.gold_answers:
            raise DatasetError(f"question {self.question_id!r} has no gold answers")


@dataclass
class MetricReport:
    em: float
    f1: float
    n_questions: int
    per_question: list[tuple[str, int, float]] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "em": self.em,
            "f1": self.f1,
            "n_questions": self.n_questions,
            "per_question": [{"question_id": q, "em": e, "f1": f} for q, e, f in self.per_question],
        }


def evaluate_dataset(predictions: Mapping[str, str], records: Sequence[QuestionRecord]) -> MetricReport:
    known = {r.question_id for r in records}
    unknown = sorted(set(predictions) - known)
    if unknown:
        raise DatasetError(f"predictions for unknown question ids: {unknown[:5]}")
    rows = []
    for r in records:
        em, f1 = em_f1(predictions.get(r.question_id, ""), r.gold_answers)
        rows.append((r.question_id, em, f1))
    n = len(rows)
    if n == 0:
        return MetricReport(0.0, 0.0, 0, [])
    return MetricReport(100.0 * sum(r[1] for r in rows) / n, 100.0 * sum(r[2] for r in rows) / n, n, rows)


def _from_squad(data: dict) -> list[QuestionRecord]:
    out = []
    for article in data["data"]:
        for para in article["paragraphs"]:
            for qa in para["qas"]:
                answers = [a["text"] for a in qa.get("answers", [])]
                if answers:
                    out.append(QuestionRecord(str(qa["id"]), qa["question"], tuple(answers)))
    return out


def load_dataset(path: str | Path) -> list[QuestionRecord]:
    """SQuAD JSON (``{"data": [...]}``) or line-delimited ``{question_id, question, answers}``."""
    raw = Path(path).read_text(encoding="utf-8")
    stripped = raw.lstrip()
    if stripped.startswith("{") and '"data"' in stripped[:200]:
        try:
            return _from_squad(json.loads(raw))
        except (json.JSONDecodeError, KeyError, TypeError):
            pass  # fall through: could be a one-line jsonl file
    out = []
    seen = set()
    for lineno, line in enumerate(raw.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            qid = str(rec.get("question_id", rec.get("id")))
            answers = rec["answers"]
            if isinstance(answers, str):
                answers = [answers]
            r = QuestionRecord(qid, rec["question"], tuple(answers))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DatasetError(f"{path}:{lineno}: malformed question record ({exc})") from exc
        except DatasetError as exc:
            raise DatasetError(f"{path}:{lineno}: {exc}") from exc
        if r.question_id in seen:
            raise DatasetError(f"{path}:{lineno}: duplicate question_id {r.question_id!r}")
        seen.add(r.question_id)
        out.append(r)
    return out


def write_dataset(records: Iterable[QuestionRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps({"question_id": r.question_id, "question": r.text, "answers": list(r.gold_answers)}) + "\n")


def split_dataset(records: Sequence[QuestionRecord], holdout: int = 5000, seed: int = 0):
    """Seeded random holdout: returns ``(remaining, held_out)``, each in input order."""
    if holdout > len(records):
        raise DatasetError(f"cannot hold out {holdout} of {len(records)} questions")
    picked = set(random.Random(seed).sample(range(len(records)), holdout))
    rest = [r for i, r in enumerate(records) if i not in picked]
    held = [r for i, r in enumerate(records) if i in picked]
    return rest, held


# ---------------------------------------------------------------------------
# sweep over number of passages
# ---------------------------------------------------------------------------

ALL_MODES = (
    (NormalizationMode.PER_PASSAGE, False),
    (NormalizationMode.PER_PASSAGE, True),
    (NormalizationMode.GLOBAL, False),
    (NormalizationMode.GLOBAL, True),
)


def mode_label(mode: NormalizationMode, use_scores: bool) -> str:
    return NormalizationMode(mode).value + ("+scores" if use_scores else "")


def parse_mode_label(label: str) -> tuple[NormalizationMode, bool]:
    base, plus, rest = label.partition("+")
    if plus and rest != "scores":
        raise ValueError(f"bad sweep mode {label!r}")
    return NormalizationMode(base), bool(plus)


@dataclass(frozen=True)
class SweepConfig:
    passage_counts: tuple[int, ...] = tuple(range(1, 31))
    modes: tuple[tuple[NormalizationMode, bool], ...] = ALL_MODES
    seed: int = 0
    max_questions: int | None = None

    def __post_init__(self):
        counts = tuple(int(k) for k in self.passage_counts)
        if not counts or min(counts) < 1 or list(counts) != sorted(set(counts)):
            raise ValueError("passage_counts must be a non-empty strictly ascending list of integers >= 1")
        object.__setattr__(self, "passage_counts", counts)
        object.__setattr__(self, "modes", tuple((NormalizationMode(m), bool(s)) for m, s in self.modes))


@dataclass(frozen=True)
class SweepRow:
    mode: str
    k: int
    em: float
    f1: float
    n: int
    truncated: int = 0  # questions with fewer than k passages available


def sweep_passages(pipeline, dataset: Sequence[QuestionRecord], config: SweepConfig = SweepConfig()) -> list[SweepRow]:
    """EM/F1 for every (mode, k): answer from the top-k reranked passages.

    Retrieval and reranking run once per question; each k reuses the same
    ranked list and scorer outputs, only the normalization/combination
    differs between modes.
    """
    records = list(dataset)
    if config.max_questions is not None and config.max_questions < len(records):
        picked = sorted(random.Random(config.seed).sample(range(len(records)), config.max_questions))
        records = [records[i] for i in picked]
    k_max = config.passage_counts[-1]
    prepared = [pipeline.prepare(r.text, r.question_id, k=k_max) for r in records]
    rows = []
    for mode, use_scores in config.modes:
        label = mode_label(mode, use_scores)
        for k in config.passage_counts:
            preds = {}
            short = 0
            for r, prep in zip(records, prepared):
                if prep.n_available < k:
                    short += 1
                res = pipeline.answer_prepared(prep, k=k, mode=mode, use_passage_scores=use_scores)
                preds[r.question_id] = res.answer
            rep = evaluate_dataset(preds, records)
            if short:
                log.info("sweep %s k=%d: %d questions had fewer than %d passages; used all available", label, k, short, k)
            rows.append(SweepRow(label, k, rep.em, rep.f1, rep.n_questions, short))
    return rows


def sweep_to_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mode", "k", "em", "f1", "n"])
    for r in rows:
        w.writerow([r.mode, r.k, f"{r.em:.4f}", f"{r.f1:.4f}", r.n])
    return buf.getvalue()
