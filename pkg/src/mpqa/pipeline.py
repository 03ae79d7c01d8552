"""End-to-end answering: retrieve -> rerank -> score -> normalize -> combine -> merge."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

from .aggregate import (
    AnswerCandidate,
    AnswerGroup,
    NormalizationMode,
    combine_passage_score,
    enumerate_spans,
    merge_answers,
    normalize,
)
from .corpus import ChunkingPolicy, ChunkMode, Passage
from .ranker import LinearRankerModel, PassagePosterior, RankedPassage, rerank_topk
from .retrieval import Bm25Params, InvertedIndex, RetrievalHit, retrieve
from .scorer import LexicalScorer, RemoteScorer, SpanLogits
from .text import normalize_answer

RANKERS = ("bm25", "linear", "scorer")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    chunking: ChunkingPolicy = ChunkingPolicy()
    bm25: Bm25Params = Bm25Params()
    scorer: str = "lexical"  # "lexical" or "remote:<host>:<port>"
    scorer_timeout: float = 10.0
    ranker: str = "bm25"  # where rerank logits come from, see RANKERS
    ranker_model: str | None = None
    ranker_epochs: int = 200
    ranker_learning_rate: float = 0.5
    mode: NormalizationMode = NormalizationMode.GLOBAL
    use_passage_scores: bool = True
    k_retrieve: int = 100
    k_rerank: int = 30
    max_span_len: int = 30
    span_candidates: int = 20
    top_n: int = 5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", NormalizationMode(self.mode))
        for name in ("k_retrieve", "k_rerank", "max_span_len", "span_candidates", "top_n"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"config field {name!r} must be >= 1, got {getattr(self, name)}")
        if self.k_rerank > self.k_retrieve:
            raise ConfigError(f"config field 'k_rerank' ({self.k_rerank}) must not exceed 'k_retrieve' ({self.k_retrieve})")
        if self.ranker not in RANKERS:
            raise ConfigError(f"config field 'ranker' must be one of {RANKERS}, got {self.ranker!r}")
        if self.ranker == "linear" and not self.ranker_model:
            raise ConfigError("config field 'ranker_model' is required when ranker is 'linear'")
        if self.scorer != "lexical" and not self.scorer.startswith("remote:"):
            raise ConfigError(f"config field 'scorer' must be 'lexical' or 'remote:<host>:<port>', got {self.scorer!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["chunking"] = {"mode": self.chunking.mode.value, "length": self.chunking.length, "stride": self.chunking.stride}
        d["mode"] = self.mode.value
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        extra = sorted(set(d) - known)
        if extra:
            raise ConfigError(f"unknown config field(s): {', '.join(extra)}")
        try:
            if "chunking" in d:
                c = d["chunking"]
                d["chunking"] = ChunkingPolicy(ChunkMode(c.get("mode", "sliding")), int(c.get("length", 100)), int(c.get("stride", 50)))
            if "bm25" in d:
                d["bm25"] = Bm25Params(**d["bm25"])
        except (TypeError, ValueError, AttributeError) as exc:
            raise ConfigError(f"bad config field: {exc}") from exc
        try:
            return cls(**d)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad config value: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed config ({exc})") from exc
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(d)

    def replace(self, **changes) -> "PipelineConfig":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(changes)
        return PipelineConfig(**d)


@dataclass
class Prepared:
    """Retrieval and reranking output for one question, reusable across k and modes."""

    question_id: str
    question: str
    hits: list[RetrievalHit]
    ranked: list[RankedPassage]
    rank_logits: dict[str, float]
    logits: dict[str, SpanLogits] = field(default_factory=dict)

    @property
    def n_available(self) -> int:
        return len(self.ranked)


@dataclass
class AnswerResult:
    question_id: str
    status: str
    groups: list[AnswerGroup]
    candidates: list[AnswerCandidate]
    passage_ids: list[str]
    posterior: PassagePosterior | None = None

    @property
    def answer(self) -> str:
        return self.groups[0].text if self.groups else ""

    def to_record(self) -> dict:
        top = self.groups[0] if self.groups else None
        return {
            "question_id": self.question_id,
            "status": self.status,
            "answer": top.text if top else "",
            "score": top.total_score if top else 0.0,
            "passage_ids": top.passage_ids if top else [],
            "alternatives": [
                {"answer": g.text, "score": g.total_score, "passage_ids": g.passage_ids} for g in self.groups[1:]
            ],
        }


def make_scorer(config: PipelineConfig):
    if config.scorer == "lexical":
        return LexicalScorer()
    return RemoteScorer(config.scorer[len("remote:") :], timeout=config.scorer_timeout)


class Pipeline:
    def __init__(self, config: PipelineConfig, index: InvertedIndex, ranker: LinearRankerModel | None = None, scorer=None):
        if config.ranker == "linear" and ranker is None:
            ranker = LinearRankerModel.load(config.ranker_model)
        self.config = config
        self.index = index
        self.ranker = ranker
        self.scorer = scorer if scorer is not None else make_scorer(config)

    def _passages(self, ids: Sequence[str]) -> list[Passage]:
        return [self.index.passages[p] for p in ids]

    def _score(self, prep: Prepared, ids: Sequence[str]) -> list[SpanLogits]:
        missing = [p for p in ids if p not in prep.logits]
        if missing:
            for lg in self.scorer.score_many(prep.question, self._passages(missing)):
                prep.logits[lg.passage_id] = lg
        return [prep.logits[p] for p in ids]

    def prepare(self, question: str, question_id: str = "", k: int | None = None) -> Prepared:
        """Retrieve ``k_retrieve`` hits and rerank them, keeping the best ``k`` (default ``k_rerank``)."""
        cfg = self.config
        k = cfg.k_rerank if k is None else k
        hits = retrieve(self.index, question, max(cfg.k_retrieve, k))
        prep = Prepared(question_id, question, hits, [], {})
        if not hits:
            return prep
        if cfg.ranker == "linear":
            prep.rank_logits = self.ranker.score_hits(question, hits, self.index.passages)
        elif cfg.ranker == "scorer":
            prep.rank_logits = {lg.passage_id: lg.passage_logit for lg in self._score(prep, [h.passage_id for h in hits])}
        else:
            prep.rank_logits = {h.passage_id: h.score for h in hits}
        prep.ranked, _ = rerank_topk(hits, prep.rank_logits, k, question_id)
        return prep

    def answer_prepared(
        self,
        prep: Prepared,
        k: int | None = None,
        mode: NormalizationMode | str | None = None,
        use_passage_scores: bool | None = None,
    ) -> AnswerResult:
        cfg = self.config
        k = cfg.k_rerank if k is None else k
        mode = cfg.mode if mode is None else NormalizationMode(mode)
        use_scores = cfg.use_passage_scores if use_passage_scores is None else use_passage_scores
        if not prep.ranked:
            return AnswerResult(prep.question_id, "no passages", [], [], [])
        kept = prep.ranked[:k]
        ids = [p.passage_id for p in kept]
        _, posterior = rerank_topk(prep.hits, prep.rank_logits, len(kept), prep.question_id)
        dist = normalize(self._score(prep, ids), mode)
        candidates = enumerate_spans(dist, cfg.max_span_len, cfg.span_candidates, self.index.passages)
        if use_scores:
            candidates = [combine_passage_score(c, posterior) for c in candidates]
        groups = merge_answers(candidates)[: cfg.top_n]
        return AnswerResult(prep.question_id, "ok", groups, candidates, ids, posterior)

    def answer_question(self, question: str, question_id: str = "") -> AnswerResult:
        return self.answer_prepared(self.prepare(question, question_id))


def answer_occurrences(passage: Passage, answers: Sequence[str], slack: int = 2) -> list[tuple[int, int]]:
    """1-based (a_s, a_e) spans whose normalized text equals a normalized answer."""
    out = set()
    n = len(passage.tokens)
    for ans in answers:
        target = normalize_answer(ans)
        if not target:
            continue
        width = len(ans.split())
        for s in range(n):
            for e in range(s, min(n, s + width + slack)):
                if normalize_answer(passage.span_text(s, e)) == target:
                    out.add((s + 1, e + 1))
    return sorted(out)


def contains_answer(passage: Passage, answers: Sequence[str]) -> bool:
    """Cheap positive-passage test on normalized token sequences."""
    toks = normalize_answer(passage.text).split()
    for ans in answers:
        a = normalize_answer(ans).split()
        if a and any(toks[i : i + len(a)] == a for i in range(len(toks) - len(a) + 1)):
            return True
    return False
