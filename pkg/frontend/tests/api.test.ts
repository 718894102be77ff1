/** End-to-end client checks against a scripted SSE fixture server:
 * the rendered assistant message equals the concatenation of emitted
 * deltas, parameter edits reach the wire, and HTTP failures surface as
 * banners without touching the transcript. */

import assert from "node:assert/strict";
import { createServer, type Server } from "node:http";
import { after, before, test } from "node:test";

import { httpTransport } from "../src/api.js";
import { ChatStore } from "../src/state.js";

interface Script {
  status?: number;
  deltas?: string[];
  finishReason?: string;
  errorBody?: unknown;
}

const received: Array<Record<string, unknown>> = [];
let script: Script = {};
let server: Server;
let endpoint = "";

before(async () => {
  server = createServer((request, response) => {
    const chunks: Buffer[] = [];
    request.on("data", (chunk) => chunks.push(chunk));
    request.on("end", () => {
      received.push(JSON.parse(Buffer.concat(chunks).toString() || "{}"));
      if (script.status && script.status >= 400) {
        response.writeHead(script.status, { "Content-Type": "application/json" });
        response.end(JSON.stringify(script.errorBody ?? { detail: "denied" }));
        return;
      }
      response.writeHead(200, {
        "Content-Type": "text/event-stream",
        "Cache-Control": "no-cache",
      });
      const deltas = script.deltas ?? [];
      let i = 0;
      const tick = (): void => {
        if (i < deltas.length) {
          response.write(`data: ${JSON.stringify({ delta: deltas[i], done: false })}\n\n`);
          i += 1;
          setTimeout(tick, 2);
        } else {
          response.write(`data: ${JSON.stringify({
            done: true,
            conversation_id: "fixture-conv",
            finish_reason: script.finishReason ?? "stop",
            output_token_estimate: deltas.length,
          })}\n\n`);
          response.end();
        }
      };
      tick();
    });
  });
  await new Promise<void>((resolve) => server.listen(0, "127.0.0.1", resolve));
  const address = server.address();
  if (address === null || typeof address === "string") throw new Error("no port");
  endpoint = `http://127.0.0.1:${address.port}/api/generate`;
});

after(() => {
  server.close();
});

test("streamed deltas render exactly as the assistant message", async () => {
  script = { deltas: ["stream", "ing ", "works ", "✓"] };
  received.length = 0;
  const store = new ChatStore(httpTransport(endpoint));
  const snapshots: string[] = [];
  store.subscribe((state) => {
    if (state.pending !== null) snapshots.push(state.pending);
  });

  const ok = await store.sendPrompt("demo prompt");
  assert.equal(ok, true);
  assert.deepEqual(store.state.transcript, [
    { role: "user", content: "demo prompt" },
    { role: "assistant", content: "streaming works ✓" },
  ]);
  assert.equal(store.state.conversationId, "fixture-conv");
  // the buffer visibly grew delta by delta (no reordering or loss)
  assert.deepEqual(snapshots.filter((s) => s.length > 0), [
    "stream", "streaming ", "streaming works ", "streaming works ✓",
  ]);
});

test("parameter edits appear in the next request body on the wire", async () => {
  script = { deltas: ["ok"] };
  received.length = 0;
  const store = new ChatStore(httpTransport(endpoint));
  store.editParam("temperature", 0.15);
  store.editParam("max_length", 32);
  await store.sendPrompt("first");
  store.editParam("memory_k", 0);
  await store.sendPrompt("second");

  assert.equal(received[0].temperature, 0.15);
  assert.equal(received[0].max_length, 32);
  assert.equal(received[0].memory_k, 10);
  assert.equal(received[1].memory_k, 0);
  assert.equal(received[1].conversation_id, "fixture-conv");
});

test("single-flight over the real wire", async () => {
  script = { deltas: ["slow", " reply"] };
  received.length = 0;
  const store = new ChatStore(httpTransport(endpoint));
  const first = store.sendPrompt("one");
  const blocked = await store.sendPrompt("two");
  assert.equal(blocked, false);
  assert.equal(await first, true);
  assert.equal(received.length, 1);
});

test("401 becomes an error banner, transcript untouched", async () => {
  script = { status: 401, errorBody: { detail: "missing credentials" } };
  received.length = 0;
  const store = new ChatStore(httpTransport(endpoint));
  const ok = await store.sendPrompt("locked out");
  assert.equal(ok, false);
  assert.equal(store.state.transcript.length, 0);
  assert.equal(store.state.connection.kind, "error");
  if (store.state.connection.kind === "error") {
    assert.match(store.state.connection.message, /missing credentials/);
  }
});

test("422 detail names the offending field", async () => {
  script = {
    status: 422,
    errorBody: { detail: [{ loc: ["body", "memory_k"], msg: "should be >= 0" }] },
  };
  const store = new ChatStore(httpTransport(endpoint));
  await store.sendPrompt("bad params");
  if (store.state.connection.kind === "error") {
    assert.match(store.state.connection.message, /memory_k/);
  } else {
    assert.fail("expected an error banner");
  }
});
