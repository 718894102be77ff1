"""Exact flat-scan backend: brute-force cosine over every live document."""

from __future__ import annotations

import numpy as np

from .base import BaseIndex, FilterSpec, IndexedDocument, SearchHit, build_filter


class FlatIndex(BaseIndex):
    backend = "flat"

    def add(self, doc: IndexedDocument) -> None:
        vector = self._prepare_vector(doc.vector)
        with self._rw_lock.write():
            self._store(doc, vector)

    def search(self, query, k: int, filter: FilterSpec = None) -> list[SearchHit]:
        """Exact top-k by cosine among filter-passing live documents."""
        if k < 1:
            raise ValueError("k must be >= 1")
        q = self._query_vector(query)
        predicate = build_filter(filter)
        with self._rw_lock.read():
            self._require_live()
            ordinals = [
                o for o in range(len(self._doc_ids))
                if o not in self._deleted
                and (predicate is None or predicate(self._metadata[o]))
            ]
            if not ordinals:
                return []
            ords = np.asarray(ordinals, dtype=np.intp)
            scores = self._vectors[ords] @ q  # float64 accumulation
            doc_ids = np.asarray([self._doc_ids[o] for o in ordinals], dtype=np.uint64)
            order = np.lexsort((doc_ids, -scores))[:k]
            return [self._hit(int(ords[i]), float(scores[i])) for i in order]
