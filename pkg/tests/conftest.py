"""Shared fixtures: mock providers and a tiny local HTTP fixture server."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from lmforge.providers import MockProvider


@pytest.fixture
def mock_provider() -> MockProvider:
    return MockProvider(seed=7, dim=32)


class LocalHttpServer:
    """Scripted HTTP fixture: register handlers per path, serve on a thread.

    A handler takes the parsed JSON body (or None) and returns
    (status, content_type, payload_bytes). Raw bytes are sent verbatim so
    wire-framing tests stay byte-exact.
    """

    def __init__(self):
        self.routes: dict[str, object] = {}
        self.requests: list[tuple[str, dict | None]] = []
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):  # noqa: N802 (http.server API)
                length = int(self.headers.get("Content-Length", 0))
                raw = self.rfile.read(length) if length else b""
                try:
                    body = json.loads(raw) if raw else None
                except json.JSONDecodeError:
                    body = None
                outer.requests.append((self.path, body))
                handler = outer.routes.get(self.path)
                if handler is None:
                    self.send_response(404)
                    self.end_headers()
                    return
                status, content_type, payload = handler(body)
                self.send_response(status)
                self.send_header("Content-Type", content_type)
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    @property
    def url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}"

    def close(self):
        self._server.shutdown()
        self._server.server_close()


@pytest.fixture
def http_fixture():
    server = LocalHttpServer()
    yield server
    server.close()
