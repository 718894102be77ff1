"""Embedding math: normalization, cosine similarity, similarity matrices,
batched embedding through a provider, and the deterministic hash-to-vector
map used by the mock provider and offline featurizers.

All accumulation happens in double precision regardless of input dtype.
"""

from __future__ import annotations

import hashlib
from typing import Sequence

import numpy as np

from .errors import DimensionMismatchError, ZeroVectorError

__all__ = [
    "as_vector",
    "cosine",
    "normalize",
    "embed_batch",
    "similarity_matrix",
    "hash_embedding",
    "Embedder",
]


def as_vector(values: Sequence[float] | np.ndarray) -> np.ndarray:
    """Validate and convert to a 1-D float64 array (no NaN/Inf allowed)."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise DimensionMismatchError(f"expected a non-empty 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ZeroVectorError("vector contains NaN or Inf")
    return v


def cosine(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> float:
    """Cosine similarity in [-1, 1], clamped against rounding drift."""
    va, vb = as_vector(a), as_vector(b)
    if va.shape[0] != vb.shape[0]:
        raise DimensionMismatchError(f"dims differ: {va.shape[0]} vs {vb.shape[0]}")
    na = float(np.dot(va, va)) ** 0.5
    nb = float(np.dot(vb, vb)) ** 0.5
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine undefined for the zero vector")
    value = float(np.dot(va, vb)) / (na * nb)
    return min(1.0, max(-1.0, value))


def normalize(v: Sequence[float] | np.ndarray) -> np.ndarray:
    """Scale to unit L2 norm, preserving direction."""
    vec = as_vector(v)
    norm = float(np.dot(vec, vec)) ** 0.5
    if norm == 0.0:
        raise ZeroVectorError("cannot normalize the zero vector")
    return vec / norm


def embed_batch(provider, texts: Sequence[str], batch_size: int = 32) -> list[np.ndarray]:
    """Embed texts in chunks of at most batch_size, preserving order.

    Provider failures are re-raised annotated with the failing chunk index.
    All returned vectors must share one dimensionality.
    """
    if not texts:
        raise ValueError("texts must be non-empty")
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    out: list[np.ndarray] = []
    for chunk_index, start in enumerate(range(0, len(texts), batch_size)):
        chunk = list(texts[start:start + batch_size])
        try:
            vectors = provider.embed(chunk)
        except Exception as exc:
            exc.args = (f"chunk {chunk_index}: {exc}",)
            raise
        out.extend(np.asarray(v, dtype=np.float64) for v in vectors)
    dims = {v.shape[0] for v in out}
    if len(dims) != 1:
        raise DimensionMismatchError(f"provider returned ragged vectors with dims {sorted(dims)}")
    return out


def similarity_matrix(
    queries: Sequence[Sequence[float] | np.ndarray],
    corpus: Sequence[Sequence[float] | np.ndarray],
) -> np.ndarray:
    """Matrix S with S[i, j] = cosine(queries[i], corpus[j])."""
    q = np.asarray([as_vector(v) for v in queries], dtype=np.float64)
    c = np.asarray([as_vector(v) for v in corpus], dtype=np.float64)
    if q.shape[1] != c.shape[1]:
        raise DimensionMismatchError(f"dims differ: {q.shape[1]} vs {c.shape[1]}")
    qn = np.linalg.norm(q, axis=1)
    cn = np.linalg.norm(c, axis=1)
    if np.any(qn == 0.0) or np.any(cn == 0.0):
        raise ZeroVectorError("similarity matrix undefined for zero vectors")
    sims = (q / qn[:, None]) @ (c / cn[:, None]).T
    return np.clip(sims, -1.0, 1.0)


class Embedder:
    """Task handle binding a provider to batched embedding."""

    def __init__(self, provider, batch_size: int = 32):
        self.provider = provider
        self.batch_size = batch_size

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        return embed_batch(self.provider, texts, batch_size=self.batch_size)

    def similarity(self, a: str, b: str) -> float:
        va, vb = self.embed([a, b])
        return cosine(va, vb)

    def describe(self) -> dict:
        return {
            "task": "embedder",
            "model": self.provider.endpoint.model,
            "base_url": self.provider.endpoint.base_url,
            "batch_size": self.batch_size,
        }


def _seeded_unit_vector(tag: str, seed: int, dim: int) -> np.ndarray:
    digest = hashlib.sha256(f"{seed}\x1f{tag}".encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    vec = rng.standard_normal(dim)
    return vec / np.linalg.norm(vec)


def hash_embedding(text: str, dim: int, seed: int, keyword_weight: float = 0.9) -> np.ndarray:
    """Deterministic text -> unit vector map.

    The vector is keyword_weight * (unit vector hashed from the first
    whitespace token) + (1 - keyword_weight) * (unit vector hashed from the
    full text), renormalized. Texts sharing a leading keyword therefore stay
    highly similar while distinct texts still get distinct vectors.
    """
    stripped = text.strip()
    if not stripped:
        raise ValueError("cannot embed an empty text")
    keyword = stripped.split()[0]
    key_vec = _seeded_unit_vector(f"kw:{keyword}", seed, dim)
    residual = _seeded_unit_vector(f"tx:{stripped}", seed, dim)
    combined = keyword_weight * key_vec + (1.0 - keyword_weight) * residual
    return normalize(combined)
