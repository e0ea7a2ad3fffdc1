"""Lexical (Okapi BM25), dense (cosine) and hybrid scoring for evidence re-ranking."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from kgverify.encoders import Encoder, tokenize

NEUTRAL_NORM = 0.5


class DimensionMismatch(ValueError):
    pass


class ZeroVectorError(ValueError):
    pass


def cosine(u: Sequence[float] | np.ndarray, v: Sequence[float] | np.ndarray) -> float:
    """Cosine similarity, clipped to [-1, 1].

    Raises:
        DimensionMismatch: vectors differ in length.
        ZeroVectorError: either vector has zero norm.
    """
    a = np.asarray(u, dtype=float)
    b = np.asarray(v, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine undefined for a zero vector")
    return float(min(1.0, max(-1.0, float(a @ b) / (na * nb))))


def cosine_or_zero(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine that maps the zero-vector case to 0 (no dense evidence either way)."""
    try:
        return cosine(u, v)
    except ZeroVectorError:
        return 0.0


@dataclass
class LexicalIndex:
    """Okapi BM25 state over a fixed document list."""

    documents: list[tuple[Hashable, list[str]]]
    k1: float = 1.2
    b: float = 0.75
    document_frequencies: Counter = field(init=False)
    average_length: float = field(init=False)
    _tf: dict[Hashable, Counter] = field(init=False, repr=False)
    _len: dict[Hashable, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.document_frequencies = Counter()
        self._tf = {}
        self._len = {}
        for doc_id, toks in self.documents:
            self._tf[doc_id] = Counter(toks)
            self._len[doc_id] = len(toks)
            self.document_frequencies.update(set(toks))
        total = sum(self._len.values())
        self.average_length = total / len(self.documents) if self.documents and total else 1.0

    @classmethod
    def from_texts(cls, docs: Sequence[tuple[Hashable, str]], k1: float = 1.2, b: float = 0.75) -> LexicalIndex:
        return cls([(doc_id, tokenize(text)) for doc_id, text in docs], k1=k1, b=b)

    def idf(self, term: str) -> float:
        n = len(self.documents)
        df = self.document_frequencies.get(term, 0)
        return math.log(1.0 + (n - df + 0.5) / (df + 0.5))

    def score(self, query: str | Sequence[str], doc_id: Hashable) -> float:
        if doc_id not in self._tf:
            raise KeyError(f"unknown document {doc_id!r}")
        terms = tokenize(query) if isinstance(query, str) else list(query)
        tf = self._tf[doc_id]
        norm = self.k1 * (1.0 - self.b + self.b * self._len[doc_id] / self.average_length)
        total = 0.0
        for term in terms:
            f = tf.get(term, 0)
            if f:
                total += self.idf(term) * f * (self.k1 + 1.0) / (f + norm)
        return total


def lexical_score(idx: LexicalIndex, query: str, doc_id: Hashable) -> float:
    return idx.score(query, doc_id)


@dataclass(frozen=True)
class HybridConfig:
    alpha: float = 0.5
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.k1 <= 0:
            raise ValueError("k1 must be positive")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError("b must lie in [0, 1]")


def minmax(values: Sequence[float]) -> list[float]:
    """Min-max normalize; a degenerate pool maps every value to 0.5."""
    if not values:
        return []
    lo, hi = min(values), max(values)
    if hi == lo:
        return [NEUTRAL_NORM] * len(values)
    span = hi - lo
    return [(v - lo) / span for v in values]


def pool_scores(
    query: str, texts: Sequence[str], cfg: HybridConfig, enc: Encoder
) -> tuple[list[float], list[float], list[float]]:
    """Return (normalized BM25, cosine, hybrid) for every candidate in the pool."""
    idx = LexicalIndex.from_texts(list(enumerate(texts)), k1=cfg.k1, b=cfg.b)
    q_terms = tokenize(query)
    lex = minmax([idx.score(q_terms, i) for i in range(len(texts))])
    vecs = enc.encode([query, *texts])
    qv = vecs[0]
    cos = [cosine_or_zero(qv, vecs[i + 1]) for i in range(len(texts))]
    a = cfg.alpha
    hybrid = [a * n + (1.0 - a) * c for n, c in zip(lex, cos)]
    return lex, cos, hybrid


def hybrid_score(query: str, candidate: str, pool: Sequence[str], cfg: HybridConfig, enc: Encoder) -> float:
    """Score one candidate against the query, normalizing BM25 over ``pool``."""
    if not pool:
        raise ValueError("pool must be non-empty")
    try:
        pos = list(pool).index(candidate)
    except ValueError:
        raise ValueError("candidate must be a member of the pool") from None
    _, _, hybrid = pool_scores(query, pool, cfg, enc)
    return hybrid[pos]


def rank(ids: Sequence[Hashable], scores: Sequence[float], k: int | None = None) -> list[tuple[Hashable, float]]:
    """Sort descending by score, ties by smallest id."""
    order = sorted(zip(ids, scores), key=lambda p: (-p[1], p[0]))
    return order if k is None else order[:k]


def top_k(
    query: str,
    pool: Sequence[tuple[Hashable, str]],
    k: int,
    cfg: HybridConfig,
    enc: Encoder,
) -> list[tuple[Hashable, float]]:
    """Rank ``(id, text)`` candidates by hybrid score and keep the best ``k``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not pool:
        return []
    ids = [p[0] for p in pool]
    _, _, hybrid = pool_scores(query, [p[1] for p in pool], cfg, enc)
    return rank(ids, hybrid, k)
