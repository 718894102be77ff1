"""Reorders retrieved documents by actual relevance to the query.

Three pointwise backends share one sorting contract (descending score,
ties by ascending original index):

- http-scorer: POST {"query", "documents"} to an external cross-encoder
  style scoring endpoint replying {"scores": [...]},
- llm-judge: one provider call per document with a fixed, versioned rubric
  prompt demanding an integer 0..100 at temperature 0, normalized to [0,1],
- embedding-fallback: cosine between query and document embeddings.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .embeddings import cosine
from .errors import (
    ProviderHTTPError,
    ProviderUnreachableError,
    ScoreCountMismatchError,
    UnparsableScoreError,
)
from .providers import GenerationParams

logger = logging.getLogger(__name__)

__all__ = ["RerankRequest", "RankedDocument", "RerankResult", "Reranker",
           "rerank", "order_by_scores", "JUDGE_RUBRIC_VERSION"]

BACKENDS = ("http-scorer", "llm-judge", "embedding-fallback")

JUDGE_RUBRIC_VERSION = "relevance-rubric/1"

JUDGE_RUBRIC = (
    "You are a relevance judge (rubric {version}). Score how well the "
    "document answers the query on an integer scale from 0 (irrelevant) to "
    "100 (a direct, complete answer). Repeating the query verbatim without "
    "answering it scores low. Reply with only the integer.\n"
    "Query: {query}\n"
    "Document: {document}"
)

_JUDGE_PARAMS = GenerationParams(temperature=0.0, top_p=1.0, max_length=8)


@dataclass(frozen=True)
class RerankRequest:
    query: str
    documents: tuple[str, ...]
    top_n: int | None = None

    def __post_init__(self) -> None:
        if not self.documents:
            raise ValueError("documents must be non-empty")
        if self.top_n is not None and not 1 <= self.top_n <= len(self.documents):
            raise ValueError("top_n must be in 1..len(documents)")

    @classmethod
    def make(cls, query: str, documents: Sequence[str], top_n: int | None = None):
        return cls(query=query, documents=tuple(documents), top_n=top_n)


@dataclass(frozen=True)
class RankedDocument:
    original_index: int
    score: float
    text: str


@dataclass(frozen=True)
class RerankResult:
    ranking: tuple[RankedDocument, ...]
    backend: str


def order_by_scores(
    documents: Sequence[str], scores: Sequence[float], top_n: int | None = None
) -> tuple[RankedDocument, ...]:
    """Sort descending by score, ties by ascending original index."""
    if len(scores) != len(documents):
        raise ScoreCountMismatchError(len(documents), len(scores))
    ranked = sorted(
        (RankedDocument(original_index=i, score=float(s), text=d)
         for i, (d, s) in enumerate(zip(documents, scores))),
        key=lambda r: (-r.score, r.original_index),
    )
    return tuple(ranked[:top_n] if top_n is not None else ranked)


def _judge_score(provider, query: str, document: str, doc_index: int) -> float:
    prompt = JUDGE_RUBRIC.format(version=JUDGE_RUBRIC_VERSION, query=query, document=document)
    reply = provider.complete_text([("user", prompt)], _JUDGE_PARAMS)
    for attempt in range(2):
        try:
            value = int(reply.strip())
            if not 0 <= value <= 100:
                raise ValueError(reply)
            return value / 100.0
        except ValueError:
            if attempt == 1:
                raise UnparsableScoreError(doc_index, reply)
            retry = prompt + f"\nYour reply {reply!r} was not a bare integer 0-100. Reply with only the integer."
            reply = provider.complete_text([("user", retry)], _JUDGE_PARAMS)
    raise AssertionError("unreachable")


class Reranker:
    """Task handle for one configured backend."""

    def __init__(self, backend: str, provider=None, scorer_url: str | None = None,
                 timeout: float = 30.0, concurrency: int = 4):
        if backend not in BACKENDS:
            raise ValueError(f"unknown reranker backend {backend!r}")
        if backend == "http-scorer" and not scorer_url:
            raise ValueError("http-scorer backend needs scorer_url")
        if backend in ("llm-judge", "embedding-fallback") and provider is None:
            raise ValueError(f"{backend} backend needs a provider")
        self.backend = backend
        self.provider = provider
        self.scorer_url = scorer_url
        self.timeout = timeout
        self.concurrency = concurrency

    @classmethod
    def from_config(cls, config: dict) -> "Reranker":
        from .errors import ConfigError
        from .providers import make_provider

        backend = config.get("backend", "embedding-fallback")
        provider = None
        if backend in ("llm-judge", "embedding-fallback"):
            provider = make_provider(config)
        try:
            return cls(
                backend=backend,
                provider=provider,
                scorer_url=config.get("scorer_url"),
                timeout=float(config.get("timeout", 30.0)),
                concurrency=int(config.get("concurrency", 4)),
            )
        except ValueError as exc:
            raise ConfigError("backend", str(exc)) from exc

    def _http_scores(self, request: RerankRequest) -> list[float]:
        import httpx

        url = self.scorer_url.rstrip("/") + "/score"
        try:
            response = httpx.post(
                url,
                json={"query": request.query, "documents": list(request.documents)},
                timeout=self.timeout,
            )
        except httpx.TransportError as exc:
            raise ProviderUnreachableError(f"{url}: {exc}") from exc
        if response.status_code >= 400:
            raise ProviderHTTPError(response.status_code, response.text[:200])
        scores = response.json().get("scores")
        if not isinstance(scores, list):
            raise ScoreCountMismatchError(len(request.documents), 0)
        return [float(s) for s in scores]

    def _judge_scores(self, request: RerankRequest) -> list[float]:
        with ThreadPoolExecutor(max_workers=self.concurrency) as pool:
            return list(pool.map(
                lambda pair: _judge_score(self.provider, request.query, pair[1], pair[0]),
                enumerate(request.documents),
            ))

    def _embedding_scores(self, request: RerankRequest) -> list[float]:
        vectors = self.provider.embed([request.query, *request.documents])
        query_vec = vectors[0]
        return [cosine(query_vec, v) for v in vectors[1:]]

    def rerank(self, request: RerankRequest) -> RerankResult:
        if self.backend == "http-scorer":
            scores = self._http_scores(request)
        elif self.backend == "llm-judge":
            scores = self._judge_scores(request)
        else:
            scores = self._embedding_scores(request)
        ranking = order_by_scores(request.documents, scores, request.top_n)
        return RerankResult(ranking=ranking, backend=self.backend)

    def describe(self) -> dict:
        return {
            "task": "reranker",
            "backend": self.backend,
            "scorer_url": self.scorer_url,
            "model": self.provider.endpoint.model if self.provider else None,
        }


def rerank(request: RerankRequest, backend: Reranker) -> RerankResult:
    return backend.rerank(request)
