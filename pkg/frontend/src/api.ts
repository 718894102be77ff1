/** fetch-based transport for the generate endpoint (SSE over POST). */

import { parseSseStream, streamChunks } from "./sse.js";
import type { Transport, TransportResult } from "./types.js";

async function errorDetail(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (typeof body.detail === "string") return body.detail;
    if (Array.isArray(body.detail)) {
      const first = body.detail[0] as { loc?: unknown[]; msg?: string };
      const field = Array.isArray(first.loc) ? first.loc.join(".") : "";
      return `${first.msg ?? "invalid request"}${field ? ` (${field})` : ""}`;
    }
  } catch {
    /* non-JSON error body */
  }
  return `HTTP ${response.status}`;
}

const NO_EVENTS: AsyncIterable<never> = (async function* () {})();

export function httpTransport(endpoint: string = "/api/generate"): Transport {
  return async (body, token): Promise<TransportResult> => {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (token) headers["Authorization"] = `Bearer ${token}`;
    const response = await fetch(endpoint, {
      method: "POST",
      headers,
      body: JSON.stringify(body),
    });
    if (!response.ok) {
      return {
        status: response.status,
        error: await errorDetail(response),
        events: NO_EVENTS,
      };
    }
    if (!response.body) {
      return { status: response.status, error: "response had no body", events: NO_EVENTS };
    }
    return {
      status: response.status,
      events: parseSseStream(streamChunks(response.body)),
    };
  };
}
