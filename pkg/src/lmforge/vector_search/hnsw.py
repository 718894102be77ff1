"""Hierarchical navigable small-world backend.

Nodes are inserted at a level drawn as floor(-ln(U) * level_multiplier)
from a seeded RNG; construction descends greedily to the node's top level,
then runs an ef_construction beam per layer, wiring neighbors selected by
the standard diversity heuristic (keep candidates closer to the node than
to any already-kept neighbor, backfilling pruned candidates). Degree is
capped at M per layer, 2M at layer 0.

Deletion tombstones the node: it keeps routing traffic but is excluded
from results; save() compacts tombstones away.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .base import BaseIndex, FilterSpec, IndexedDocument, SearchHit, build_filter


@dataclass(frozen=True)
class HnswParams:
    M: int = 16
    ef_construction: int = 200
    ef_search: int = 100
    level_multiplier: float | None = None  # default 1 / ln(M)
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.M < 2:
            raise ValueError("M must be >= 2")
        if self.ef_construction < self.M:
            raise ValueError("ef_construction must be >= M")
        if self.ef_search < 1:
            raise ValueError("ef_search must be >= 1")
        if self.level_multiplier is None:
            object.__setattr__(self, "level_multiplier", 1.0 / math.log(self.M))
        elif self.level_multiplier <= 0:
            raise ValueError("level_multiplier must be > 0")


class HnswIndex(BaseIndex):
    backend = "hnsw"

    def __init__(self, dim: int, params: HnswParams | None = None):
        super().__init__(dim)
        self.params = params or HnswParams()
        self._levels: list[int] = []
        self._graph: list[list[list[int]]] = []  # node -> level -> neighbor ordinals
        self._entry: int | None = None
        self._max_level = 0
        self._rng = np.random.default_rng(self.params.rng_seed)

    # --- internals ---------------------------------------------------------------
    def _draw_level(self) -> int:
        u = float(self._rng.random())
        if u <= 0.0:
            u = 5e-324
        return int(-math.log(u) * self.params.level_multiplier)

    def _sims(self, ordinals: list[int], q: np.ndarray) -> np.ndarray:
        return self._buffer[ordinals] @ q

    def _greedy(self, q: np.ndarray, start: int, level: int) -> int:
        buffer = self._buffer
        current = start
        current_sim = float(buffer[current] @ q)
        improved = True
        while improved:
            improved = False
            neighbors = self._graph[current][level]
            if not neighbors:
                break
            sims = buffer[neighbors] @ q
            best = int(np.argmax(sims))
            if sims[best] > current_sim:
                current = neighbors[best]
                current_sim = float(sims[best])
                improved = True
        return current

    def _search_layer(
        self, q: np.ndarray, entry_points: list[int], ef: int, level: int
    ) -> list[tuple[float, int]]:
        """Beam search; returns (sim, ordinal) sorted best-first."""
        visited = set(entry_points)
        entry_sims = self._sims(entry_points, q)
        candidates: list[tuple[float, int]] = []  # max-first via negated sim
        results: list[tuple[float, int]] = []  # min-heap, worst-first
        for sim, ordinal in zip(entry_sims, entry_points):
            heapq.heappush(candidates, (-float(sim), ordinal))
            heapq.heappush(results, (float(sim), ordinal))
        while len(results) > ef:
            heapq.heappop(results)

        buffer = self._buffer
        graph = self._graph
        while candidates:
            neg_sim, current = heapq.heappop(candidates)
            if len(results) == ef and -neg_sim < results[0][0]:
                break
            fresh = [n for n in graph[current][level] if n not in visited]
            if not fresh:
                continue
            visited.update(fresh)
            sims = (buffer[fresh] @ q).tolist()
            worst = results[0][0] if results else -math.inf
            for sim, ordinal in zip(sims, fresh):
                if len(results) < ef or sim > worst:
                    heapq.heappush(candidates, (-sim, ordinal))
                    heapq.heappush(results, (sim, ordinal))
                    if len(results) > ef:
                        heapq.heappop(results)
                    worst = results[0][0]
        return sorted(results, key=lambda t: (-t[0], t[1]))

    def _select_neighbors(
        self, candidates: list[tuple[float, int]], m: int
    ) -> list[int]:
        """Diversity heuristic with backfill; candidates sorted best-first.

        A candidate is kept only while it is closer to the base node than to
        every already-kept neighbor; pruned candidates backfill spare slots.
        """
        if len(candidates) <= m and len(candidates) <= 1:
            return [o for _s, o in candidates]
        ordinals = [o for _s, o in candidates]
        vecs = self._buffer[ordinals].astype(np.float64)
        cross = vecs @ vecs.T
        kept: list[int] = []
        discarded: list[int] = []
        for i, (sim, _ordinal) in enumerate(candidates):
            if len(kept) == m:
                break
            row = cross[i]
            if any(row[j] >= sim for j in kept):
                discarded.append(i)
                continue
            kept.append(i)
        for i in discarded:
            if len(kept) == m:
                break
            kept.append(i)
        return [ordinals[i] for i in kept]

    def _prune_node(self, ordinal: int, level: int, m_max: int) -> None:
        neighbors = self._graph[ordinal][level]
        if len(neighbors) <= m_max:
            return
        sims = self._sims(neighbors, self._buffer[ordinal].astype(np.float64))
        ranked = sorted(zip(sims.tolist(), neighbors), key=lambda t: (-t[0], t[1]))
        self._graph[ordinal][level] = self._select_neighbors(ranked, m_max)

    # --- operations ---------------------------------------------------------------
    def add(self, doc: IndexedDocument) -> None:
        vector = self._prepare_vector(doc.vector)
        with self._rw_lock.write():
            ordinal = self._store(doc, vector)
            level = self._draw_level()
            self._levels.append(level)
            self._graph.append([[] for _ in range(level + 1)])

            if self._entry is None:
                self._entry = ordinal
                self._max_level = level
                return

            q = vector.astype(np.float64)
            entry = self._entry
            for layer in range(self._max_level, level, -1):
                entry = self._greedy(q, entry, layer)

            entry_points = [entry]
            M = self.params.M
            for layer in range(min(level, self._max_level), -1, -1):
                candidates = self._search_layer(
                    q, entry_points, self.params.ef_construction, layer
                )
                selected = self._select_neighbors(candidates, M)
                self._graph[ordinal][layer] = list(selected)
                m_max = 2 * M if layer == 0 else M
                for neighbor in selected:
                    self._graph[neighbor][layer].append(ordinal)
                    self._prune_node(neighbor, layer, m_max)
                entry_points = [o for _s, o in candidates]

            if level > self._max_level:
                self._entry = ordinal
                self._max_level = level

    def search(self, query, k: int, filter: FilterSpec = None) -> list[SearchHit]:
        """Beam search with ef = max(ef_search, k); when a filter (or
        tombstones) starve the beam below k hits, ef widens 2x then 4x."""
        if k < 1:
            raise ValueError("k must be >= 1")
        q = self._query_vector(query)
        predicate = build_filter(filter)
        base_ef = max(self.params.ef_search, k)

        with self._rw_lock.read():
            self._require_live()
            hits: list[tuple[float, int]] = []
            for widen in (1, 2, 4):
                entry = self._entry
                for layer in range(self._max_level, 0, -1):
                    entry = self._greedy(q, entry, layer)
                beam = self._search_layer(q, [entry], base_ef * widen, 0)
                hits = [
                    (sim, ordinal)
                    for sim, ordinal in beam
                    if ordinal not in self._deleted
                    and (predicate is None or predicate(self._metadata[ordinal]))
                ]
                if len(hits) >= k:
                    break
            ranked = sorted(hits, key=lambda t: (-t[0], self._doc_ids[t[1]]))[:k]
            return [self._hit(ordinal, sim) for sim, ordinal in ranked]

    def graph_stats(self) -> dict:
        """Structural counters used by tests and the CLI."""
        degree0 = [len(node[0]) for node in self._graph] if self._graph else []
        return {
            "nodes": len(self._graph),
            "max_level": self._max_level,
            "entry": self._entry,
            "max_degree_l0": max(degree0, default=0),
            "levels": list(self._levels),
        }

    def describe(self) -> dict:
        info = super().describe()
        info.update(
            M=self.params.M,
            ef_construction=self.params.ef_construction,
            ef_search=self.params.ef_search,
            rng_seed=self.params.rng_seed,
        )
        return info
