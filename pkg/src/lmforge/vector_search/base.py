"""Shared document storage for both index backends.

Vectors are normalized in double precision, then quantized to float32 at
add time: every score anywhere in the system is a float64 dot product over
those stored float32 bits, which is what makes save/load round trips
bit-exact.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from ..errors import (
    DimensionMismatchError,
    DuplicateDocIdError,
    EmptyIndexError,
    UnknownDocIdError,
    ZeroVectorError,
)

MAX_DOC_ID = 2 ** 64 - 1

MetadataValue = str | int | float | bool
FilterSpec = Callable[[dict], bool] | Mapping[str, MetadataValue] | None


@dataclass(frozen=True)
class IndexedDocument:
    doc_id: int
    text: str
    vector: Sequence[float] | np.ndarray
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SearchHit:
    doc_id: int
    score: float
    text: str
    metadata: dict


def build_filter(spec: FilterSpec) -> Callable[[dict], bool] | None:
    """Normalize a filter spec: a callable passes through, a mapping becomes
    an all-pairs equality predicate."""
    if spec is None or callable(spec):
        return spec
    pairs = dict(spec)
    return lambda metadata: all(metadata.get(k) == v for k, v in pairs.items())


class ReadWriteLock:
    """Many concurrent readers or one writer; writers wait for readers."""

    def __init__(self) -> None:
        self._readers = 0
        self._readers_lock = threading.Lock()
        self._writer_lock = threading.Lock()

    @contextmanager
    def read(self):
        with self._readers_lock:
            self._readers += 1
            if self._readers == 1:
                self._writer_lock.acquire()
        try:
            yield
        finally:
            with self._readers_lock:
                self._readers -= 1
                if self._readers == 0:
                    self._writer_lock.release()

    @contextmanager
    def write(self):
        with self._writer_lock:
            yield


def _validate_metadata(metadata: dict) -> dict:
    for key, value in metadata.items():
        if not isinstance(key, str):
            raise ValueError(f"metadata keys must be strings, got {key!r}")
        if isinstance(value, bool) or isinstance(value, (str, int, float)):
            continue
        raise ValueError(f"metadata value for {key!r} must be string/number/boolean")
    return dict(metadata)


class BaseIndex:
    """Growable normalized-vector store with tombstone deletion.

    Concurrency contract: many concurrent readers or one writer, so a
    search never observes a half-inserted document.
    """

    backend = "base"

    def __init__(self, dim: int):
        if dim <= 0:
            raise ValueError("dim must be a positive integer")
        self.dim = int(dim)
        self._buffer = np.empty((8, self.dim), dtype=np.float32)
        self._doc_ids: list[int] = []
        self._texts: list[str] = []
        self._metadata: list[dict] = []
        self._id_to_ord: dict[int, int] = {}
        self._deleted: set[int] = set()
        self._rw_lock = ReadWriteLock()

    # --- storage ------------------------------------------------------------
    def __len__(self) -> int:
        return len(self._doc_ids) - len(self._deleted)

    @property
    def _vectors(self) -> np.ndarray:
        """View of the stored (normalized, float32) vectors, one row per node."""
        return self._buffer[: len(self._doc_ids)]

    @property
    def live_count(self) -> int:
        return len(self)

    def _prepare_vector(self, vector) -> np.ndarray:
        v = np.asarray(vector, dtype=np.float64)
        if v.ndim != 1 or v.shape[0] != self.dim:
            raise DimensionMismatchError(
                f"vector has shape {v.shape}, index dim is {self.dim}"
            )
        if not np.all(np.isfinite(v)):
            raise ZeroVectorError("vector contains NaN or Inf")
        norm = float(np.dot(v, v)) ** 0.5
        if norm == 0.0:
            raise ZeroVectorError("cannot index the zero vector")
        return (v / norm).astype(np.float32)

    def _store(self, doc: IndexedDocument, vector_f32: np.ndarray) -> int:
        if not isinstance(doc.doc_id, int) or isinstance(doc.doc_id, bool):
            raise ValueError("doc_id must be an integer")
        if not 0 <= doc.doc_id <= MAX_DOC_ID:
            raise ValueError("doc_id must fit in an unsigned 64-bit integer")
        if doc.doc_id in self._id_to_ord:
            raise DuplicateDocIdError(doc.doc_id)
        ordinal = len(self._doc_ids)
        if ordinal == self._buffer.shape[0]:
            grown = np.empty((self._buffer.shape[0] * 2, self.dim), dtype=np.float32)
            grown[:ordinal] = self._buffer
            self._buffer = grown
        self._buffer[ordinal] = vector_f32
        self._doc_ids.append(doc.doc_id)
        self._texts.append(doc.text)
        self._metadata.append(_validate_metadata(doc.metadata))
        self._id_to_ord[doc.doc_id] = ordinal
        return ordinal

    def _query_vector(self, query) -> np.ndarray:
        v = np.asarray(query, dtype=np.float64)
        if v.ndim != 1 or v.shape[0] != self.dim:
            raise DimensionMismatchError(
                f"query has shape {v.shape}, index dim is {self.dim}"
            )
        norm = float(np.dot(v, v)) ** 0.5
        if norm == 0.0:
            raise ZeroVectorError("cannot search with the zero vector")
        return v / norm

    def _require_live(self) -> None:
        if len(self) == 0:
            raise EmptyIndexError()

    def _hit(self, ordinal: int, score: float) -> SearchHit:
        return SearchHit(
            doc_id=self._doc_ids[ordinal],
            score=float(score),
            text=self._texts[ordinal],
            metadata=dict(self._metadata[ordinal]),
        )

    # --- public shared ops -----------------------------------------------------
    def add(self, doc: IndexedDocument) -> None:
        raise NotImplementedError

    def add_item(self, doc_id: int, text: str, vector, metadata: dict | None = None) -> None:
        self.add(IndexedDocument(doc_id=doc_id, text=text, vector=vector,
                                 metadata=metadata or {}))

    def delete(self, doc_id: int) -> None:
        with self._rw_lock.write():
            if doc_id not in self._id_to_ord:
                raise UnknownDocIdError(doc_id)
            ordinal = self._id_to_ord.pop(doc_id)
            self._deleted.add(ordinal)

    def contains(self, doc_id: int) -> bool:
        return doc_id in self._id_to_ord

    def save(self, path) -> None:
        from .io import save_index

        with self._rw_lock.write():
            save_index(self, path)

    def describe(self) -> dict:
        return {"task": "searcher", "backend": self.backend, "dim": self.dim,
                "count": len(self)}
