import json
import threading

import pytest
from fastapi.testclient import TestClient

from lmforge.chat_service import AuthDecision, AuthPolicy, ChatGateway, create_app
from lmforge.memory import MemoryStore
from lmforge.providers import MockProvider


def build(seed=1, auth=None, static_dir=None, provider=None):
    provider = provider or MockProvider(seed=seed)
    gateway = ChatGateway(provider)
    app = create_app(gateway, auth=auth, static_dir=static_dir)
    return provider, gateway, TestClient(app)


def sse_events(response_text):
    return [json.loads(line[6:]) for line in response_text.splitlines()
            if line.startswith("data: ")]


def post_stream(client, body, headers=None):
    with client.stream("POST", "/api/generate", json=body, headers=headers or {}) as r:
        assert r.status_code == 200, r.read()
        assert r.headers["content-type"].startswith("text/event-stream")
        return sse_events(r.read().decode())


def test_healthz():
    _, _, client = build()
    reply = client.get("/healthz")
    assert reply.status_code == 200
    body = reply.json()
    assert body["status"] == "ok" and "version" in body


def test_root_serves_bootstrap():
    _, _, client = build()
    reply = client.get("/")
    assert reply.status_code == 200
    assert reply.headers["content-type"].startswith("text/html")
    assert 'id="app"' in reply.text


def test_root_serves_static_dir(tmp_path):
    (tmp_path / "index.html").write_text("<html><body>custom ui</body></html>")
    _, _, client = build(static_dir=tmp_path)
    assert "custom ui" in client.get("/").text


def test_stream_contract_and_reassembly():
    _, _, client = build()
    events = post_stream(client, {"prompt": "echo: hello streaming world", "memory_k": 0})
    deltas = [e for e in events if not e.get("done")]
    terminal = events[-1]
    assert all(set(e) == {"delta", "done"} for e in deltas)
    assert "".join(e["delta"] for e in deltas) == "hello streaming world"
    assert terminal["done"] is True
    assert terminal["finish_reason"] == "stop"
    assert terminal["conversation_id"]
    assert terminal["output_token_estimate"] == 3
    assert [e.get("done") for e in events].count(True) == 1


def test_memory_window_reaches_provider():
    provider, gateway, client = build()
    first = post_stream(client, {"prompt": "echo: one", "memory_k": 0})
    conversation_id = first[-1]["conversation_id"]
    # oracle: the window as it stands before the second request
    expected = [(m.role, m.content) for m in gateway.memory.window(conversation_id, 2)]
    assert expected == [("user", "echo: one"), ("assistant", "one")]
    post_stream(client, {"prompt": "echo: two", "memory_k": 2,
                         "conversation_id": conversation_id})
    seen = provider.chat_calls[1]["messages"]
    assert seen[:-1] == expected
    assert seen[-1] == ("user", "echo: two")


@pytest.mark.parametrize("memory_k", [0, 1, 2, 5])
def test_memory_k_window_sizes(memory_k):
    provider, gateway, client = build()
    conversation_id = None
    for i in range(4):
        body = {"prompt": f"echo: turn {i}", "memory_k": memory_k}
        if conversation_id:
            body["conversation_id"] = conversation_id
        expected_window = (
            [(m.role, m.content) for m in gateway.memory.window(conversation_id, memory_k)]
            if conversation_id else []
        )
        events = post_stream(client, body)
        conversation_id = events[-1]["conversation_id"]
        seen = provider.chat_calls[-1]["messages"]
        assert seen == expected_window + [("user", f"echo: turn {i}")]
        assert len(seen) - 1 == min(memory_k, 2 * i)


def test_memory_write_after_stream_only_on_success():
    provider = MockProvider(seed=1)
    gateway = ChatGateway(provider)
    client = TestClient(create_app(gateway))
    events = post_stream(client, {"prompt": "echo: persist me", "memory_k": 0})
    conversation_id = events[-1]["conversation_id"]
    window = gateway.memory.window(conversation_id, 10)
    assert [(m.role, m.content) for m in window] == [
        ("user", "echo: persist me"), ("assistant", "persist me"),
    ]


def test_errored_stream_leaves_memory_unchanged():
    provider = MockProvider(seed=1)

    class Boom(Exception):
        pass

    from lmforge.errors import MalformedStreamChunkError

    original = provider._open_chat_stream

    def failing_stream(messages, params):
        events = original(messages, params)

        def gen():
            yield next(events)
            raise MalformedStreamChunkError("mid-stream break")

        return gen()

    provider._open_chat_stream = failing_stream
    gateway = ChatGateway(provider)
    client = TestClient(create_app(gateway))
    events = post_stream(client, {"prompt": "echo: lost words here", "memory_k": 0})
    terminal = events[-1]
    assert terminal["finish_reason"] == "error"
    assert "error" in terminal
    conversation_id = terminal["conversation_id"]
    assert gateway.memory.window(conversation_id, 10) == []


def test_buffered_mode():
    _, _, client = build()
    reply = client.post("/api/generate",
                        json={"prompt": "echo: buffered reply", "stream": False,
                              "memory_k": 0})
    assert reply.status_code == 200
    body = reply.json()
    assert body["text"] == "buffered reply"
    assert body["finish_reason"] == "stop"
    assert body["conversation_id"]


def test_validation_errors():
    _, _, client = build()
    missing = client.post("/api/generate", json={"memory_k": 1})
    assert missing.status_code == 422
    assert any("prompt" in error["loc"] for error in missing.json()["detail"])

    blank = client.post("/api/generate", json={"prompt": "   "})
    assert blank.status_code == 422

    unknown = client.post("/api/generate", json={"prompt": "x", "bogus": 1})
    assert unknown.status_code == 422
    assert any("bogus" in error["loc"] for error in unknown.json()["detail"])

    negative = client.post("/api/generate", json={"prompt": "x", "memory_k": -1})
    assert negative.status_code == 422


def test_wrong_method():
    _, _, client = build()
    assert client.get("/api/generate").status_code == 405


def test_bearer_auth(monkeypatch):
    monkeypatch.setenv("LMFORGE_API_TOKEN", "sekrit")
    _, _, client = build()
    denied = client.post("/api/generate", json={"prompt": "echo: x"})
    assert denied.status_code == 401
    assert denied.json()["detail"] == "missing credentials"

    wrong = client.post("/api/generate", json={"prompt": "echo: x"},
                        headers={"Authorization": "Bearer nope"})
    assert wrong.status_code == 401

    ok = client.post("/api/generate", json={"prompt": "echo: x", "stream": False},
                     headers={"Authorization": "Bearer sekrit"})
    assert ok.status_code == 200


def test_custom_auth_hook_banned_conversation():
    def ban_hook(credential, request):
        if request is not None and request.conversation_id == "banned":
            return AuthDecision.deny("conversation banned")
        return None

    auth = AuthPolicy(token_env="", hooks=[ban_hook])
    _, _, client = build(auth=auth)
    denied = client.post("/api/generate",
                         json={"prompt": "echo: x", "conversation_id": "banned"})
    assert denied.status_code == 401
    assert denied.json()["detail"] == "conversation banned"
    allowed = client.post("/api/generate",
                          json={"prompt": "echo: x", "stream": False})
    assert allowed.status_code == 200


def test_auth_denies_before_provider_call():
    provider = MockProvider(seed=1)

    def deny_all(credential, request):
        return AuthDecision.deny("no")

    _, _, client = build(provider=provider, auth=AuthPolicy(token_env="", hooks=[deny_all]))
    client.post("/api/generate", json={"prompt": "echo: x"})
    assert provider.connect_attempts == 0


def test_provider_down_becomes_502():
    provider = MockProvider(seed=1)
    provider.fail_connects = 99
    _, _, client = build(provider=provider)
    reply = client.post("/api/generate", json={"prompt": "echo: x"})
    assert reply.status_code == 502
    assert provider.connect_attempts == provider.endpoint.max_retries + 1


def test_defaults_applied_when_fields_absent():
    provider, _, client = build()
    post_stream(client, {"prompt": "echo: defaults"})
    params = provider.chat_calls[0]["params"]
    assert params.temperature == 0.7
    assert params.top_p == 0.9
    assert params.max_length == 512


def test_concurrent_streams_distinct_conversations():
    provider = MockProvider(seed=1, latency=0.02)
    gateway = ChatGateway(provider)
    client = TestClient(create_app(gateway))
    results = {}

    def run(i):
        events = post_stream(client, {"prompt": f"echo: stream {i}", "memory_k": 0})
        results[i] = "".join(e.get("delta", "") for e in events if not e.get("done"))

    threads = [threading.Thread(target=run, args=(i,)) for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert results == {i: f"stream {i}" for i in range(4)}
