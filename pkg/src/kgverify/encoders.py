"""Dense text encoders behind one small interface.

Three backings are provided: a deterministic hashing encoder used for offline
runs and tests, a precomputed lookup table, and a remote HTTP embedding
endpoint. A local sentence-transformers model is available when that optional
dependency is installed.
"""

from __future__ import annotations

import hashlib
import os
import re
import threading
import time
from functools import lru_cache
from typing import Protocol, Sequence, runtime_checkable

import httpx
import numpy as np

_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)


class EncoderError(RuntimeError):
    """Raised when an encoder cannot produce a vector."""


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumerics."""
    return _TOKEN.findall(text.lower())


def text_hash(text: str) -> str:
    return hashlib.sha1(text.encode("utf-8")).hexdigest()


@runtime_checkable
class Encoder(Protocol):
    dimension: int

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        """Return a ``(len(texts), dimension)`` float array."""
        ...


class HashingEncoder:
    """Deterministic bag-of-features encoder.

    Word tokens and character trigrams of each word are hashed (BLAKE2b, so the
    result does not depend on ``PYTHONHASHSEED``) into ``dimension`` signed
    buckets. Trigrams make near-miss spellings land close to each other.
    """

    def __init__(self, dimension: int = 256, trigram_weight: float = 0.5) -> None:
        if dimension <= 0:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self.trigram_weight = trigram_weight
        self._encode_one = lru_cache(maxsize=1 << 16)(self._encode_uncached)

    def _bucket(self, feature: str) -> tuple[int, float]:
        d = hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest()
        v = int.from_bytes(d, "little")
        return v % self.dimension, (1.0 if (v >> 63) & 1 else -1.0)

    def _encode_uncached(self, text: str) -> tuple[float, ...]:
        vec = np.zeros(self.dimension)
        for tok in tokenize(text):
            i, s = self._bucket("w:" + tok)
            vec[i] += s
            padded = f"#{tok}#"
            for j in range(len(padded) - 2):
                i, s = self._bucket("c:" + padded[j:j + 3])
                vec[i] += s * self.trigram_weight
        return tuple(vec.tolist())

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dimension))
        return np.array([self._encode_one(t) for t in texts], dtype=float)


class PrecomputedEncoder:
    """Lookup table keyed by the SHA-1 of the text (TSV ``hash<TAB>v1,v2,...``)."""

    def __init__(self, table: dict[str, np.ndarray]) -> None:
        if not table:
            raise EncoderError("empty precomputed table")
        dims = {len(v) for v in table.values()}
        if len(dims) != 1:
            raise EncoderError(f"inconsistent vector dimensions: {sorted(dims)}")
        self.dimension = dims.pop()
        self._table = table

    @classmethod
    def from_tsv(cls, path: str | os.PathLike) -> PrecomputedEncoder:
        table = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    key, values = line.split("\t")
                    vec = np.array([float(x) for x in values.split(",")])
                except ValueError:
                    raise EncoderError(f"{path}:{lineno}: malformed vector record") from None
                if not np.all(np.isfinite(vec)):
                    raise EncoderError(f"{path}:{lineno}: non-finite component")
                table[key] = vec
        return cls(table)

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dimension))
        for i, t in enumerate(texts):
            try:
                out[i] = self._table[text_hash(t)]
            except KeyError:
                raise EncoderError(f"no precomputed vector for {t[:60]!r}") from None
        return out


class RemoteEncoder:
    """Batch embedding over HTTP (OpenAI-style ``{"input": [...]}`` contract).

    Calls are serialized through a lock with a minimum spacing, and vectors are
    memoized by exact text.
    """

    def __init__(
        self,
        url: str,
        dimension: int,
        model: str | None = None,
        token_env: str = "KGVERIFY_EMBED_TOKEN",
        min_interval: float = 0.0,
        client: httpx.Client | None = None,
        timeout: float = 30.0,
    ) -> None:
        self.url = url
        self.dimension = dimension
        self.model = model
        self.token_env = token_env
        self.min_interval = min_interval
        self._client = client or httpx.Client(timeout=timeout)
        self._lock = threading.Lock()
        self._last_call = 0.0
        self._cache: dict[str, np.ndarray] = {}

    def _fetch(self, texts: list[str]) -> list[list[float]]:
        headers = {}
        token = os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        body: dict = {"input": texts}
        if self.model:
            body["model"] = self.model
        with self._lock:
            wait = self.min_interval - (time.monotonic() - self._last_call)
            if wait > 0:
                time.sleep(wait)
            try:
                resp = self._client.post(self.url, json=body, headers=headers)
                resp.raise_for_status()
            except httpx.HTTPError as exc:
                raise EncoderError(f"embedding endpoint failed: {exc}") from exc
            finally:
                self._last_call = time.monotonic()
        data = resp.json()
        if isinstance(data, dict) and "data" in data:
            rows = [item["embedding"] for item in sorted(data["data"], key=lambda d: d.get("index", 0))]
        elif isinstance(data, dict) and "embeddings" in data:
            rows = data["embeddings"]
        else:
            rows = data
        if len(rows) != len(texts):
            raise EncoderError(f"endpoint returned {len(rows)} vectors for {len(texts)} texts")
        return rows

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        missing = sorted({t for t in texts if t not in self._cache})
        if missing:
            for t, row in zip(missing, self._fetch(missing)):
                vec = np.asarray(row, dtype=float)
                if vec.shape != (self.dimension,) or not np.all(np.isfinite(vec)):
                    raise EncoderError("endpoint returned a malformed vector")
                self._cache[t] = vec
        if not texts:
            return np.zeros((0, self.dimension))
        return np.stack([self._cache[t] for t in texts])


class SentenceTransformerEncoder:
    """Local sentence-transformers model (default ``all-MiniLM-L6-v2``)."""

    def __init__(self, model_name: str = "sentence-transformers/all-MiniLM-L6-v2") -> None:
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:  # pragma: no cover - optional dependency
            raise EncoderError("sentence-transformers is not installed") from exc
        self._model = SentenceTransformer(model_name)
        self.dimension = int(self._model.get_sentence_embedding_dimension())
        self._lock = threading.Lock()

    def encode(self, texts: Sequence[str]) -> np.ndarray:  # pragma: no cover - needs model weights
        if not texts:
            return np.zeros((0, self.dimension))
        with self._lock:
            return np.asarray(self._model.encode(list(texts), convert_to_numpy=True), dtype=float)
