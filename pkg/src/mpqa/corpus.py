"""Documents, whitespace tokenization and passage chunking."""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

_WORD_RE = re.compile(r"\S+")
_TERMINATORS = frozenset(".!?")


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    text: str

    def __post_init__(self):
        if not self.doc_id:
            raise CorpusError("document has an empty doc_id")
        if not self.text.strip():
            raise CorpusError(f"document {self.doc_id!r} has empty text")


@dataclass(frozen=True)
class Token:
    surface: str
    char_start: int
    char_end: int


@dataclass(frozen=True)
class Passage:
    """A contiguous run of document words.

    ``doc_text`` is the full source text; it is shared between all passages
    of one document and excluded from equality and repr.
    """

    passage_id: str
    doc_id: str
    tokens: tuple[Token, ...]
    word_start: int
    doc_text: str = field(default="", repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def text(self) -> str:
        return self.span_text(0, len(self.tokens) - 1)

    def span_text(self, first: int, last: int) -> str:
        """Raw source text from token ``first`` through ``last`` (0-based, inclusive)."""
        start = self.tokens[first].char_start
        end = self.tokens[last].char_end
        if self.doc_text:
            return self.doc_text[start:end]
        return " ".join(t.surface for t in self.tokens[first : last + 1])

    @property
    def surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]


class ChunkMode(str, enum.Enum):
    FIXED = "fixed"
    SLIDING = "sliding"
    SENTENCE = "sentence"


@dataclass(frozen=True)
class ChunkingPolicy:
    mode: ChunkMode = ChunkMode.SLIDING
    length: int = 100
    stride: int = 50

    def __post_init__(self):
        object.__setattr__(self, "mode", ChunkMode(self.mode))
        if self.length < 1:
            raise CorpusError(f"chunk length must be >= 1, got {self.length}")
        if self.mode is ChunkMode.SLIDING and not 1 <= self.stride <= self.length:
            raise CorpusError(f"stride must satisfy 1 <= stride <= length, got stride={self.stride}, length={self.length}")


def tokenize(text: str) -> list[Token]:
    return [Token(m.group(), m.start(), m.end()) for m in _WORD_RE.finditer(text)]


def passage_id(doc_id: str, word_start: int) -> str:
    return f"{doc_id}#{word_start}"


def _make(doc: Document, tokens: Sequence[Token], start: int, end: int) -> Passage:
    return Passage(passage_id(doc.doc_id, start), doc.doc_id, tuple(tokens[start:end]), start, doc.text)


def chunk_fixed(doc: Document, length: int = 100) -> list[Passage]:
    if length < 1:
        raise CorpusError(f"chunk length must be >= 1, got {length}")
    tokens = tokenize(doc.text)
    return [_make(doc, tokens, s, min(s + length, len(tokens))) for s in range(0, len(tokens), length)]


def sliding_starts(n_words: int, length: int, stride: int) -> list[int]:
    """Window starts 0, stride, 2*stride, ... up to the first window reaching the end."""
    starts = []
    s = 0
    while True:
        starts.append(s)
        if s + length >= n_words:
            return starts
        s += stride


def chunk_sliding(doc: Document, length: int = 100, stride: int = 50) -> list[Passage]:
    if not 1 <= stride <= length:
        raise CorpusError(f"stride must satisfy 1 <= stride <= length, got stride={stride}, length={length}")
    tokens = tokenize(doc.text)
    if not tokens:
        return []
    return [_make(doc, tokens, s, min(s + length, len(tokens))) for s in sliding_starts(len(tokens), length, stride)]


def chunk_sentences(doc: Document) -> list[Passage]:
    """One passage per sentence.

    Naive on purpose: "Dr. Smith" splits after "Dr.".
    """
    tokens = tokenize(doc.text)
    passages = []
    first = 0
    for i, tok in enumerate(tokens):
        # tokens are maximal non-space runs, so a trailing terminator is always
        # followed by whitespace or end of text
        if tok.surface[-1] in _TERMINATORS:
            passages.append(_make(doc, tokens, first, i + 1))
            first = i + 1
    if first < len(tokens):
        passages.append(_make(doc, tokens, first, len(tokens)))
    return passages


def chunk(doc: Document, policy: ChunkingPolicy) -> list[Passage]:
    if policy.mode is ChunkMode.FIXED:
        return chunk_fixed(doc, policy.length)
    if policy.mode is ChunkMode.SLIDING:
        return chunk_sliding(doc, policy.length, policy.stride)
    return chunk_sentences(doc)


def chunk_corpus(docs: Iterable[Document], policy: ChunkingPolicy) -> list[Passage]:
    out: list[Passage] = []
    for doc in docs:
        out.extend(chunk(doc, policy))
    return out


def iter_corpus(path: str | Path) -> Iterator[Document]:
    """Read line-delimited ``{id, title, text}`` records."""
    seen: set[str] = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                doc = Document(str(rec["id"]), rec.get("title", "") or "", rec["text"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusError(f"{path}:{lineno}: malformed corpus record ({exc})") from exc
            except CorpusError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from exc
            if doc.doc_id in seen:
                raise CorpusError(f"{path}:{lineno}: duplicate document id {doc.doc_id!r}")
            seen.add(doc.doc_id)
            yield doc


def load_corpus(path: str | Path) -> list[Document]:
    return list(iter_corpus(path))


def write_corpus(docs: Iterable[Document], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for d in docs:
            f.write(json.dumps({"id": d.doc_id, "title": d.title, "text": d.text}, ensure_ascii=False) + "\n")
