"""Span scorers: a deterministic lexical baseline and a remote-scorer client.

Remote protocol
---------------
Newline-delimited JSON over a TCP stream. The client writes one request per
line and reads one response per line; responses may arrive in any order and
are matched by ``request_id``::

    -> {"request_id": "7", "question_tokens": ["who", ...], "passage_tokens": ["the", ...]}
    <- {"request_id": "7", "start_logits": [...], "end_logits": [...], "passage_logit": 0.3}

Both logit lists have ``len(passage_tokens) + 1`` entries; entry 0 is the
no-answer sentinel and entry ``i`` scores passage token ``i - 1``. A server
may answer ``{"request_id": ..., "error": "..."}`` instead.

A neural scorer typically encodes ``[CLS] passage [SEP] question [SEP]`` and
maps its sub-word outputs back onto these word positions itself.
"""

from __future__ import annotations

import itertools
import json
import math
import socket
import socketserver
import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .corpus import Passage, Token
from .text import term, term_set

MATCH_WEIGHT = 3.0
WINDOW = 5
SENTINEL_LOGIT = 1.0


class ScorerError(RuntimeError):
    pass


class ScorerProtocolError(ScorerError):
    pass


class ScorerTransportError(ScorerError):
    retryable = True


@dataclass(frozen=True, eq=False)
class SpanLogits:
    passage_id: str
    start_logits: np.ndarray
    end_logits: np.ndarray
    passage_logit: float

    @property
    def n_tokens(self) -> int:
        return self.start_logits.shape[0] - 1

    def __eq__(self, other):
        if not isinstance(other, SpanLogits):
            return NotImplemented
        return (
            self.passage_id == other.passage_id
            and np.array_equal(self.start_logits, other.start_logits)
            and np.array_equal(self.end_logits, other.end_logits)
            and self.passage_logit == other.passage_logit
        )


def make_logits(passage_id: str, start, end, passage_logit: float, n_tokens: int | None = None) -> SpanLogits:
    """Build a SpanLogits after checking lengths and finiteness."""
    start = np.asarray(start, dtype=np.float64)
    end = np.asarray(end, dtype=np.float64)
    if start.ndim != 1 or end.ndim != 1:
        raise ScorerProtocolError(f"{passage_id}: logits must be flat sequences")
    expected = start.shape[0] if n_tokens is None else n_tokens + 1
    if start.shape[0] != expected or end.shape[0] != expected:
        raise ScorerProtocolError(
            f"{passage_id}: expected {expected} start/end logits, got {start.shape[0]}/{end.shape[0]}"
        )
    if expected < 2:
        raise ScorerProtocolError(f"{passage_id}: logits must cover at least one token plus the sentinel")
    if not (np.isfinite(start).all() and np.isfinite(end).all() and math.isfinite(passage_logit)):
        raise ScorerProtocolError(f"{passage_id}: non-finite logit values")
    return SpanLogits(passage_id, start, end, float(passage_logit))


def _question_surfaces(question) -> list[str]:
    if isinstance(question, str):
        return question.split()
    return [t.surface if isinstance(t, Token) else str(t) for t in question]


def lexical_score(question: Sequence[Token] | str, passage: Passage) -> SpanLogits:
    """Deterministic stand-in for a trained reader.

    A token "matches" when its term (case-folded, edge punctuation stripped)
    is a question term. Start logit of token i: 3 * match(i) + matches in
    tokens [i, i+5). End logit: 3 * match(i) + matches in (i-5, i].
    Sentinel logits are 1.0; the passage logit counts distinct question
    terms present in the passage.
    """
    if not passage.tokens:
        raise ValueError(f"passage {passage.passage_id!r} has no tokens")
    qset = term_set(_question_surfaces(question))
    toks = [term(t.surface) for t in passage.tokens]
    match = np.array([t in qset and t != "" for t in toks], dtype=np.float64)
    n = match.shape[0]
    csum = np.concatenate(([0.0], np.cumsum(match)))
    i = np.arange(n)
    ahead = csum[np.minimum(i + WINDOW, n)] - csum[i]
    behind = csum[i + 1] - csum[np.maximum(i - WINDOW + 1, 0)]
    start = np.empty(n + 1)
    end = np.empty(n + 1)
    start[0] = end[0] = SENTINEL_LOGIT
    start[1:] = MATCH_WEIGHT * match + ahead
    end[1:] = MATCH_WEIGHT * match + behind
    present = len(qset.intersection(toks))
    return SpanLogits(passage.passage_id, start, end, float(present))


class LexicalScorer:
    name = "lexical"

    def score(self, question, passage: Passage) -> SpanLogits:
        return lexical_score(question, passage)

    def score_many(self, question, passages: Sequence[Passage]) -> list[SpanLogits]:
        return [lexical_score(question, p) for p in passages]


# ---------------------------------------------------------------------------
# remote scorer
# ---------------------------------------------------------------------------


def parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, sep, port = endpoint.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"endpoint must look like host:port, got {endpoint!r}")
    return host or "127.0.0.1", int(port)


class RemoteScorer:
    """Client for the NDJSON scorer protocol; one connection per batch."""

    name = "remote"

    def __init__(self, endpoint: str, timeout: float = 10.0):
        self.host, self.port = parse_endpoint(endpoint)
        self.timeout = timeout
        self._ids = itertools.count(1)
        self._lock = threading.Lock()

    def _next_id(self) -> str:
        with self._lock:
            return str(next(self._ids))

    def score(self, question, passage: Passage) -> SpanLogits:
        return self.score_many(question, [passage])[0]

    def score_many(self, question, passages: Sequence[Passage]) -> list[SpanLogits]:
        if not passages:
            return []
        q = _question_surfaces(question)
        pending = {}
        lines = []
        for i, p in enumerate(passages):
            rid = self._next_id()
            pending[rid] = (i, p)
            lines.append(json.dumps({"request_id": rid, "question_tokens": q, "passage_tokens": p.surfaces}))
        results: list[SpanLogits | None] = [None] * len(passages)
        try:
            with socket.create_connection((self.host, self.port), timeout=self.timeout) as sock:
                sock.settimeout(self.timeout)
                payload = ("\n".join(lines) + "\n").encode("utf-8")
                # write concurrently with reading so neither side's buffer can fill up
                writer = threading.Thread(target=_send_quietly, args=(sock, payload), daemon=True)
                writer.start()
                reader = sock.makefile("r", encoding="utf-8")
                while pending:
                    line = reader.readline()
                    if not line:
                        raise ScorerTransportError(
                            f"scorer at {self.host}:{self.port} closed the connection with {len(pending)} requests outstanding"
                        )
                    i, logits = self._parse(line, pending)
                    results[i] = logits
        except socket.timeout as exc:
            raise ScorerTransportError(f"scorer at {self.host}:{self.port} timed out after {self.timeout}s") from exc
        except OSError as exc:
            raise ScorerTransportError(f"scorer at {self.host}:{self.port} unreachable: {exc}") from exc
        return results

    @staticmethod
    def _parse(line: str, pending: dict) -> tuple[int, SpanLogits]:
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ScorerProtocolError(f"malformed response line: {exc}") from exc
        rid = str(msg.get("request_id"))
        if rid not in pending:
            raise ScorerProtocolError(f"response for unknown request_id {rid!r}")
        if "error" in msg:
            raise ScorerProtocolError(f"scorer error for request {rid}: {msg['error']}")
        i, p = pending.pop(rid)
        try:
            start, end, plogit = msg["start_logits"], msg["end_logits"], float(msg["passage_logit"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ScorerProtocolError(f"response {rid} missing or bad field: {exc}") from exc
        return i, make_logits(p.passage_id, start, end, plogit, n_tokens=len(p.tokens))


def _send_quietly(sock: socket.socket, payload: bytes) -> None:
    try:
        sock.sendall(payload)
    except OSError:
        pass  # surfaces on the reading side


def remote_score(endpoint: str, question, passage: Passage, timeout: float = 10.0) -> SpanLogits:
    return RemoteScorer(endpoint, timeout).score(question, passage)


ScoreFn = Callable[[list, list], "tuple[Sequence[float], Sequence[float], float] | dict"]


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        for raw in self.rfile:
            if not raw.strip():
                continue
            msg = json.loads(raw)
            out = self.server.score_fn(msg["question_tokens"], msg["passage_tokens"])
            if not isinstance(out, dict):
                start, end, plogit = out
                out = {"start_logits": list(map(float, start)), "end_logits": list(map(float, end)), "passage_logit": float(plogit)}
            out = {"request_id": msg["request_id"], **out}
            self.wfile.write((json.dumps(out) + "\n").encode("utf-8"))
            self.wfile.flush()


class ScorerServer(socketserver.ThreadingTCPServer):
    """Minimal protocol server around ``score_fn(question_tokens, passage_tokens)``.

    ``score_fn`` returns ``(start_logits, end_logits, passage_logit)`` or a
    raw response dict (without ``request_id``). Port 0 picks a free port.
    """

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, score_fn: ScoreFn, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _Handler)
        self.score_fn = score_fn

    @property
    def endpoint(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def start(self) -> "ScorerServer":
        threading.Thread(target=self.serve_forever, daemon=True).start()
        return self

    def stop(self) -> None:
        self.shutdown()
        self.server_close()


def lexical_score_fn(question_tokens: Iterable[str], passage_tokens: Sequence[str]):
    """Protocol-level wrapper around the lexical scorer, handy for serving it remotely."""
    toks = []
    pos = 0
    for s in passage_tokens:
        toks.append(Token(s, pos, pos + len(s)))
        pos += len(s) + 1
    lg = lexical_score(list(question_tokens), Passage("remote", "remote", tuple(toks), 0))
    return lg.start_logits.tolist(), lg.end_logits.tolist(), lg.passage_logit
