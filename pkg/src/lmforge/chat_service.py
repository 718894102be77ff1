"""The HTTP inference service: POST /api/generate with SSE streaming,
server-side conversational memory, generation parameters, authentication
hooks, and the chat UI assets at the root path.

Pipeline per request: authenticate -> load the memory window -> assemble
[system_prompt?, window..., user prompt] -> stream provider deltas to the
client -> on clean completion append the user/assistant pair to memory ->
emit a terminal metadata event. An errored stream leaves memory unchanged.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Optional

from fastapi import FastAPI, Request
from fastapi.responses import HTMLResponse, JSONResponse, StreamingResponse
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .errors import ProviderError
from .memory import MemoryStore, new_conversation_id
from .providers import GenerationParams, Provider

logger = logging.getLogger(__name__)

__all__ = [
    "AuthDecision",
    "AuthPolicy",
    "ChatGateway",
    "GatewayRequest",
    "create_app",
    "serve",
    "TOKEN_ENV_VAR",
]

TOKEN_ENV_VAR = "LMFORGE_API_TOKEN"

DEFAULTS = GenerationParams(temperature=0.7, top_p=0.9, max_length=512)
DEFAULT_MEMORY_K = 10


# --- authentication -----------------------------------------------------------------


@dataclass(frozen=True)
class AuthDecision:
    allowed: bool
    reason: str = ""

    @staticmethod
    def allow() -> "AuthDecision":
        return AuthDecision(True)

    @staticmethod
    def deny(reason: str) -> "AuthDecision":
        return AuthDecision(False, reason)


AuthHook = Callable[["str | None", "GatewayRequest | None"], "AuthDecision | None"]


@dataclass
class AuthPolicy:
    """Bearer-token check (enabled whenever the env var holds a token) plus
    a pluggable hook chain; the first deny short-circuits."""

    token_env: str = TOKEN_ENV_VAR
    hooks: list[AuthHook] = field(default_factory=list)

    def authenticate(self, credential: str | None, request=None) -> AuthDecision:
        token = os.environ.get(self.token_env) if self.token_env else None
        if token:
            if credential is None:
                return AuthDecision.deny("missing credentials")
            if credential != token:
                return AuthDecision.deny("invalid token")
        for hook in self.hooks:
            decision = hook(credential, request)
            if decision is not None and not decision.allowed:
                return decision
        return AuthDecision.allow()


# --- gateway -----------------------------------------------------------------------


@dataclass(frozen=True)
class GatewayRequest:
    prompt: str
    memory_k: int = DEFAULT_MEMORY_K
    conversation_id: str | None = None
    temperature: float = DEFAULTS.temperature
    top_p: float = DEFAULTS.top_p
    max_length: int = DEFAULTS.max_length
    system_prompt: str | None = None


class ActiveGeneration:
    """A provider stream already established for one request; iterating
    events() drains it and commits memory on clean completion."""

    def __init__(self, gateway: "ChatGateway", request: GatewayRequest,
                 conversation_id: str, stream):
        self._gateway = gateway
        self._request = request
        self.conversation_id = conversation_id
        self._stream = stream

    def events(self) -> Iterator[dict]:
        pieces: list[str] = []
        finish_reason = None
        try:
            for event in self._stream:
                if event.delta:
                    pieces.append(event.delta)
                    yield {"delta": event.delta, "done": False}
                if event.done:
                    finish_reason = event.finish_reason or "stop"
                    break
        except ProviderError as exc:
            logger.warning("provider stream failed mid-flight: %s", exc)
            yield {
                "done": True,
                "conversation_id": self.conversation_id,
                "finish_reason": "error",
                "error": str(exc),
            }
            return
        completion = "".join(pieces)
        if finish_reason in ("stop", "length") and completion:
            self._gateway.memory.append(self.conversation_id, "user", self._request.prompt)
            self._gateway.memory.append(self.conversation_id, "assistant", completion)
        yield {
            "done": True,
            "conversation_id": self.conversation_id,
            "finish_reason": finish_reason or "stop",
            "output_token_estimate": len(pieces),
        }

    def drain(self) -> dict:
        """Buffered mode: consume the stream, return one JSON-able reply."""
        text: list[str] = []
        terminal: dict = {}
        for event in self.events():
            if event.get("delta"):
                text.append(event["delta"])
            if event.get("done"):
                terminal = event
        reply = {"text": "".join(text)}
        reply.update({k: v for k, v in terminal.items() if k != "done"})
        return reply


class ChatGateway:
    """Provider + memory + defaults; the object behind /api/generate."""

    def __init__(self, provider: Provider, memory: MemoryStore | None = None,
                 defaults: GenerationParams = DEFAULTS,
                 default_memory_k: int = DEFAULT_MEMORY_K):
        self.provider = provider
        self.memory = memory or MemoryStore()
        self.defaults = defaults
        self.default_memory_k = default_memory_k

    def start(self, request: GatewayRequest) -> ActiveGeneration:
        """Validate, load the window, and open the provider stream.

        Provider connection failures raise here (before any byte reaches
        the client), so the HTTP layer can answer 502.
        """
        params = GenerationParams(
            temperature=request.temperature,
            top_p=request.top_p,
            max_length=request.max_length,
            system_prompt=request.system_prompt,
        )
        conversation_id = request.conversation_id or new_conversation_id()
        window = self.memory.window(conversation_id, request.memory_k)
        messages: list[tuple[str, str]] = []
        if request.system_prompt:
            messages.append(("system", request.system_prompt))
        messages.extend((m.role, m.content) for m in window)
        messages.append(("user", request.prompt))
        stream = self.provider.chat_complete(messages, params)
        return ActiveGeneration(self, request, conversation_id, stream)

    def describe(self) -> dict:
        return {
            "task": "generator",
            "model": self.provider.endpoint.model,
            "base_url": self.provider.endpoint.base_url,
            "temperature": self.defaults.temperature,
            "top_p": self.defaults.top_p,
            "max_length": self.defaults.max_length,
            "memory_k": self.default_memory_k,
        }


# --- HTTP layer -----------------------------------------------------------------------

_BOOTSTRAP_HTML = """<!doctype html>
<html lang="en">
<head>
<meta charset="utf-8">
<meta name="viewport" content="width=device-width, initial-scale=1">
<title>lmforge chat</title>
<link rel="stylesheet" href="/assets/style.css">
</head>
<body>
<div id="app" data-endpoint="/api/generate">
  <noscript>This chat UI bootstrap requires JavaScript.</noscript>
</div>
<script type="module" src="/assets/app.js"></script>
</body>
</html>
"""


def _sse(event: dict) -> str:
    return f"data: {json.dumps(event, ensure_ascii=False)}\n\n"


class ChatRequestBody(BaseModel):
    """The POST /api/generate body; unknown fields are rejected (422).

    Optional generation fields fall back to the service's configured
    defaults (documented: temperature 0.7, top_p 0.9, max_length 512,
    memory_k 10)."""

    model_config = ConfigDict(extra="forbid")

    prompt: str
    system_prompt: Optional[str] = None
    memory_k: Optional[int] = Field(default=None, ge=0)
    temperature: Optional[float] = Field(default=None, ge=0)
    top_p: Optional[float] = Field(default=None, gt=0, le=1)
    max_length: Optional[int] = Field(default=None, ge=1)
    conversation_id: Optional[str] = None
    stream: bool = True

    @field_validator("prompt")
    @classmethod
    def prompt_non_empty(cls, value: str) -> str:
        if not value.strip():
            raise ValueError("prompt must be non-empty")
        return value


def create_app(gateway: ChatGateway, auth: AuthPolicy | None = None,
               static_dir: str | Path | None = None):
    """Build the ASGI app. static_dir, when it exists, overrides the
    built-in bootstrap page and serves /assets/*."""
    from . import __version__

    auth = auth or AuthPolicy()
    static_root = Path(static_dir) if static_dir else None

    app = FastAPI(title="lmforge chat service", version=__version__)

    def _credential(request: Request) -> str | None:
        header = request.headers.get("authorization")
        if header and header.lower().startswith("bearer "):
            return header[7:]
        return header

    @app.post("/api/generate")
    def generate(body: ChatRequestBody, request: Request):
        decision = auth.authenticate(_credential(request), body)
        if not decision.allowed:
            return JSONResponse({"detail": decision.reason}, status_code=401)
        gateway_request = GatewayRequest(
            prompt=body.prompt,
            memory_k=body.memory_k if body.memory_k is not None else gateway.default_memory_k,
            conversation_id=body.conversation_id,
            temperature=body.temperature if body.temperature is not None
            else gateway.defaults.temperature,
            top_p=body.top_p if body.top_p is not None else gateway.defaults.top_p,
            max_length=body.max_length if body.max_length is not None
            else gateway.defaults.max_length,
            system_prompt=body.system_prompt,
        )
        try:
            generation = gateway.start(gateway_request)
        except ProviderError as exc:
            logger.error("provider unavailable: %s", exc)
            return JSONResponse({"detail": f"provider failure: {exc}"}, status_code=502)
        if not body.stream:
            return JSONResponse(generation.drain())
        return StreamingResponse(
            (_sse(event) for event in generation.events()),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-cache", "X-Accel-Buffering": "no"},
        )

    @app.get("/healthz")
    def healthz():
        return {
            "status": "ok",
            "version": __version__,
            "model": gateway.provider.endpoint.model,
        }

    @app.get("/", response_class=HTMLResponse)
    def index():
        if static_root:
            page = static_root / "index.html"
            if page.exists():
                return HTMLResponse(page.read_text(encoding="utf-8"))
        return HTMLResponse(_BOOTSTRAP_HTML)

    if static_root and static_root.exists():
        from fastapi.staticfiles import StaticFiles

        assets = static_root / "assets"
        app.mount("/assets", StaticFiles(directory=assets if assets.exists() else static_root),
                  name="assets")

    return app


def serve(host: str, port: int, gateway: ChatGateway, auth: AuthPolicy | None = None,
          static_dir: str | Path | None = None) -> None:
    """Run until interrupted; a busy port surfaces as the OS bind error."""
    import uvicorn

    app = create_app(gateway, auth=auth, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")
