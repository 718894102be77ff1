"""Wire-protocol clients for chat-completion and embedding endpoints.

Two dialects are implemented without SDK dependencies:

- openai-compatible: POST {base}/v1/chat/completions with "stream": true and
  SSE framing (lines beginning "data: ", terminated by "data: [DONE]");
  POST {base}/v1/embeddings.
- ollama-compatible: POST {base}/api/chat with newline-delimited JSON chunks
  ("done": true terminal); POST {base}/api/embeddings (one text per call).

A deterministic in-process mock provider backs the whole test suite.
Connection establishment is retried with exponential backoff + jitter up to
max_retries; mid-stream failures are never retried (retrying would duplicate
emitted text) and surface as errors to the caller.
"""

from __future__ import annotations

import json
import random
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence
from urllib.parse import urlparse

import numpy as np

from .embeddings import hash_embedding
from .errors import (
    DimensionMismatchError,
    MalformedStreamChunkError,
    ProviderHTTPError,
    ProviderTimeoutError,
    ProviderUnreachableError,
)

__all__ = [
    "ProviderEndpoint",
    "GenerationParams",
    "TokenEvent",
    "Provider",
    "HttpProvider",
    "MockProvider",
    "mock_provider",
    "make_provider",
    "iter_sse_data",
]

VALID_ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ProviderEndpoint:
    """Where and how to reach a provider."""

    base_url: str
    kind: str = "openai-compatible"  # or "ollama-compatible"
    model: str = ""
    api_key: str | None = None
    timeout: float = 30.0
    max_retries: int = 2

    def __post_init__(self) -> None:
        parsed = urlparse(self.base_url)
        if not parsed.scheme or not parsed.netloc:
            raise ValueError(f"base_url must be absolute, got {self.base_url!r}")
        if self.kind not in ("openai-compatible", "ollama-compatible"):
            raise ValueError(f"unknown provider kind {self.kind!r}")
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if not 0 <= self.max_retries <= 5:
            raise ValueError("max_retries must be in 0..5")


@dataclass(frozen=True)
class GenerationParams:
    """Sampling controls forwarded verbatim to the provider."""

    temperature: float = 0.7
    top_p: float = 0.9
    max_length: int = 512
    system_prompt: str | None = None

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")
        if self.max_length < 1:
            raise ValueError("max_length must be a positive integer")


@dataclass(frozen=True)
class TokenEvent:
    """One streamed fragment. done=True appears exactly once, last."""

    delta: str = ""
    done: bool = False
    finish_reason: str | None = None  # stop | length | error


def _validate_messages(messages: Sequence[tuple[str, str]]) -> None:
    if not messages:
        raise ValueError("messages must be non-empty")
    for i, (role, _content) in enumerate(messages):
        if role not in VALID_ROLES:
            raise ValueError(f"message {i} has invalid role {role!r}")
        if role == "system" and i != 0:
            raise ValueError("at most one system message is allowed, and it must be first")


class Provider:
    """Common retry/validation shell; subclasses open concrete streams."""

    endpoint: ProviderEndpoint
    _backoff_base = 0.25

    def chat_complete(
        self, messages: Sequence[tuple[str, str]], params: GenerationParams
    ) -> Iterator[TokenEvent]:
        _validate_messages(messages)
        return self._retrying(lambda: self._open_chat_stream(list(messages), params))

    def complete_text(
        self, messages: Sequence[tuple[str, str]], params: GenerationParams
    ) -> str:
        """Buffered convenience wrapper over chat_complete."""
        return "".join(event.delta for event in self.chat_complete(messages, params))

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            raise ValueError("texts must be non-empty")
        for i, text in enumerate(texts):
            if not text.strip():
                raise ValueError(f"text {i} is empty after trimming")
        vectors = self._retrying(lambda: self._embed(list(texts)))
        if len(vectors) != len(texts):
            raise DimensionMismatchError(
                f"provider returned {len(vectors)} vectors for {len(texts)} texts"
            )
        dims = {len(v) for v in vectors}
        if len(dims) != 1:
            raise DimensionMismatchError(f"provider returned ragged vectors with dims {sorted(dims)}")
        return [np.asarray(v, dtype=np.float64) for v in vectors]

    def _retrying(self, connect: Callable):
        """Retry connection establishment only; total attempts <= max_retries + 1."""
        retries = self.endpoint.max_retries
        for attempt in range(retries + 1):
            try:
                return connect()
            except ProviderUnreachableError:
                if attempt == retries:
                    raise
                delay = self._backoff_base * (2 ** attempt)
                time.sleep(delay + random.uniform(0, self._backoff_base))
        raise AssertionError("unreachable")

    # subclass hooks ---------------------------------------------------------
    def _open_chat_stream(self, messages, params) -> Iterator[TokenEvent]:
        raise NotImplementedError

    def _embed(self, texts: list[str]) -> list:
        raise NotImplementedError


# --- SSE / NDJSON framing -----------------------------------------------------

def iter_sse_data(lines: Iterator[str]) -> Iterator[str]:
    """Yield the payload of every SSE data line; stop at the [DONE] sentinel."""
    for line in lines:
        if not line.startswith("data: "):
            continue
        payload = line[len("data: "):]
        if payload == "[DONE]":
            return
        yield payload


def _parse_openai_chunk(payload: str) -> TokenEvent:
    try:
        obj = json.loads(payload)
        choice = obj["choices"][0]
    except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
        raise MalformedStreamChunkError(f"bad openai chunk {payload!r}: {exc}") from exc
    delta = choice.get("delta", {}).get("content") or ""
    finish = choice.get("finish_reason")
    return TokenEvent(delta=delta, done=finish is not None, finish_reason=finish)


def _parse_ollama_chunk(payload: str) -> TokenEvent:
    try:
        obj = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise MalformedStreamChunkError(f"bad ollama chunk {payload!r}: {exc}") from exc
    if not isinstance(obj, dict):
        raise MalformedStreamChunkError(f"bad ollama chunk {payload!r}: not an object")
    delta = (obj.get("message") or {}).get("content") or ""
    if obj.get("done"):
        return TokenEvent(delta=delta, done=True, finish_reason=obj.get("done_reason", "stop"))
    return TokenEvent(delta=delta)


class HttpProvider(Provider):
    """Streaming HTTP client for one endpoint; immutable and shareable."""

    def __init__(self, endpoint: ProviderEndpoint, backoff_base: float = 0.25):
        import httpx

        self.endpoint = endpoint
        self._backoff_base = backoff_base
        self._httpx = httpx
        self._client = httpx.Client(timeout=endpoint.timeout)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.endpoint.api_key:
            headers["Authorization"] = f"Bearer {self.endpoint.api_key}"
        return headers

    def _post_json(self, url: str, body: dict) -> dict:
        try:
            response = self._client.post(url, json=body, headers=self._headers())
        except self._httpx.TimeoutException as exc:
            raise ProviderTimeoutError(str(exc)) from exc
        except self._httpx.TransportError as exc:
            raise ProviderUnreachableError(f"{url}: {exc}") from exc
        if response.status_code >= 400:
            raise ProviderHTTPError(response.status_code, response.text[:200])
        return response.json()

    def _open_chat_stream(self, messages, params) -> Iterator[TokenEvent]:
        base = self.endpoint.base_url.rstrip("/")
        msgs = [{"role": r, "content": c} for r, c in messages]
        if self.endpoint.kind == "openai-compatible":
            url = f"{base}/v1/chat/completions"
            body = {
                "model": self.endpoint.model,
                "messages": msgs,
                "temperature": params.temperature,
                "top_p": params.top_p,
                "max_tokens": params.max_length,
                "stream": True,
            }
            parse = _parse_openai_chunk
        else:
            url = f"{base}/api/chat"
            body = {
                "model": self.endpoint.model,
                "messages": msgs,
                "stream": True,
                "options": {
                    "temperature": params.temperature,
                    "top_p": params.top_p,
                    "num_predict": params.max_length,
                },
            }
            parse = _parse_ollama_chunk

        try:
            stream_ctx = self._client.stream("POST", url, json=body, headers=self._headers())
            response = stream_ctx.__enter__()
        except self._httpx.TimeoutException as exc:
            raise ProviderTimeoutError(str(exc)) from exc
        except self._httpx.TransportError as exc:
            raise ProviderUnreachableError(f"{url}: {exc}") from exc
        if response.status_code >= 400:
            body_excerpt = response.read()[:200].decode("utf-8", "replace")
            stream_ctx.__exit__(None, None, None)
            raise ProviderHTTPError(response.status_code, body_excerpt)
        return self._stream_events(stream_ctx, response, parse)

    def _stream_events(self, stream_ctx, response, parse) -> Iterator[TokenEvent]:
        done_sent = False
        try:
            lines = response.iter_lines()
            if self.endpoint.kind == "openai-compatible":
                payloads = iter_sse_data(lines)
            else:
                payloads = (line for line in lines if line.strip())
            for payload in payloads:
                event = parse(payload)
                if event.done:
                    yield TokenEvent(
                        delta=event.delta, done=True,
                        finish_reason=event.finish_reason or "stop",
                    )
                    done_sent = True
                    return
                if event.delta:
                    yield event
            if not done_sent:
                # openai streams end with [DONE] after a finish_reason chunk;
                # reaching EOF without one still terminates the stream cleanly.
                yield TokenEvent(done=True, finish_reason="stop")
        except self._httpx.TimeoutException as exc:
            raise ProviderTimeoutError(str(exc)) from exc
        except self._httpx.TransportError as exc:
            raise MalformedStreamChunkError(f"stream broke mid-flight: {exc}") from exc
        finally:
            stream_ctx.__exit__(None, None, None)

    def _embed(self, texts: list[str]) -> list:
        base = self.endpoint.base_url.rstrip("/")
        if self.endpoint.kind == "openai-compatible":
            reply = self._post_json(
                f"{base}/v1/embeddings", {"model": self.endpoint.model, "input": texts}
            )
            try:
                rows = sorted(reply["data"], key=lambda r: r["index"])
                return [row["embedding"] for row in rows]
            except (KeyError, TypeError) as exc:
                raise MalformedStreamChunkError(f"bad embeddings reply: {exc}") from exc
        vectors = []
        for text in texts:
            reply = self._post_json(
                f"{base}/api/embeddings", {"model": self.endpoint.model, "prompt": text}
            )
            try:
                vectors.append(reply["embedding"])
            except (KeyError, TypeError) as exc:
                raise MalformedStreamChunkError(f"bad embeddings reply: {exc}") from exc
        return vectors


# --- mock provider --------------------------------------------------------------


@dataclass
class _ReplyRule:
    substring: str
    replies: deque = field(default_factory=deque)


class MockProvider(Provider):
    """Deterministic in-process provider used across the test suite.

    Chat: replies are resolved in order from (1) substring-matched reply
    rules, (2) the queued-reply FIFO, (3) the "echo: " prefix rule, and
    (4) a fixed "ok" fallback. One whitespace token is emitted per delta so
    max_length truncation is observable.

    Embeddings: the seed-deterministic hash-to-vector map from the
    embeddings module (keyword weighted 0.9, residual 0.1, normalized).

    Every call is recorded for payload assertions, and failure injection is
    available via fail_connects.
    """

    def __init__(self, seed: int = 0, dim: int = 32, latency: float = 0.0):
        self.endpoint = ProviderEndpoint(base_url="mock://local", model=f"mock-{seed}")
        self.seed = seed
        self.dim = dim
        self.latency = latency
        self._backoff_base = 0.0
        self.fail_connects = 0
        self.connect_attempts = 0
        self.chat_calls: list[dict] = []
        self.embed_calls: list[list[str]] = []
        self._queued: deque[str] = deque()
        self._rules: list[_ReplyRule] = []
        self._lock = threading.Lock()
        self._active = 0
        self.max_concurrent = 0

    # test plumbing ------------------------------------------------------------
    def queue_reply(self, *texts: str) -> None:
        self._queued.extend(texts)

    def add_reply_rule(self, substring: str, *replies: str) -> None:
        """Reply with each text in turn whenever the user message contains
        substring; the last reply repeats once the sequence is exhausted."""
        self._rules.append(_ReplyRule(substring, deque(replies)))

    def _check_connect(self) -> None:
        with self._lock:
            self.connect_attempts += 1
            if self.fail_connects > 0:
                self.fail_connects -= 1
                raise ProviderUnreachableError("mock connection refused")

    def _enter(self) -> None:
        with self._lock:
            self._active += 1
            self.max_concurrent = max(self.max_concurrent, self._active)

    def _exit(self) -> None:
        with self._lock:
            self._active -= 1

    def _resolve_reply(self, messages: list[tuple[str, str]]) -> str:
        user_text = next((c for r, c in reversed(messages) if r == "user"), "")
        system_text = next((c for r, c in messages if r == "system"), "")
        with self._lock:
            for rule in self._rules:
                if rule.substring in user_text:
                    return rule.replies.popleft() if len(rule.replies) > 1 else rule.replies[0]
            if self._queued:
                return self._queued.popleft()
        if user_text.startswith("echo: "):
            return user_text[len("echo: "):]
        if system_text.startswith("You are a text annotator"):
            # canned label reply: the first schema label line, as JSON
            for line in system_text.splitlines():
                if line.startswith("- ") and ":" in line:
                    return json.dumps([line[2:].split(":", 1)[0].strip()])
        return "ok"

    # Provider hooks -------------------------------------------------------------
    def _open_chat_stream(self, messages, params) -> Iterator[TokenEvent]:
        self._check_connect()
        reply = self._resolve_reply(messages)
        self.chat_calls.append({
            "messages": list(messages),
            "params": params,
            "reply": reply,
        })
        words = reply.split()
        deltas = [w if i == 0 else " " + w for i, w in enumerate(words)]
        truncated = len(deltas) > params.max_length
        if truncated:
            deltas = deltas[:params.max_length]

        def gen() -> Iterator[TokenEvent]:
            self._enter()
            try:
                if self.latency:
                    time.sleep(self.latency)
                for delta in deltas:
                    yield TokenEvent(delta=delta)
                yield TokenEvent(done=True, finish_reason="length" if truncated else "stop")
            finally:
                self._exit()

        return gen()

    def _embed(self, texts: list[str]) -> list:
        self._check_connect()
        self.embed_calls.append(list(texts))
        self._enter()
        try:
            if self.latency:
                time.sleep(self.latency)
            return [hash_embedding(t, self.dim, self.seed) for t in texts]
        finally:
            self._exit()


def mock_provider(seed: int = 0, dim: int = 32, **kwargs) -> MockProvider:
    return MockProvider(seed=seed, dim=dim, **kwargs)


def make_provider(config: dict) -> Provider:
    """Build a provider client from a flat config record.

    Recognized keys: provider_url, provider_kind, model, api_key, timeout,
    max_retries. provider_kind="mock" (or a mock:// URL) yields the
    in-process mock, honoring seed and dim keys.
    """
    url = config.get("provider_url", "")
    kind = config.get("provider_kind")
    if kind == "mock" or url.startswith("mock:"):
        seed = config.get("provider_seed", config.get("seed", 0))
        dim = config.get("provider_dim", config.get("dim", 32))
        return MockProvider(seed=int(seed), dim=int(dim))
    endpoint = ProviderEndpoint(
        base_url=url,
        kind=kind or "openai-compatible",
        model=config.get("model", ""),
        api_key=config.get("api_key"),
        timeout=float(config.get("timeout", 30.0)),
        max_retries=int(config.get("max_retries", 2)),
    )
    return HttpProvider(endpoint)
