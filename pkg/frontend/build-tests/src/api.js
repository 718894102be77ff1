/** fetch-based transport for the generate endpoint (SSE over POST). */
import { parseSseStream, streamChunks } from "./sse.js";
async function errorDetail(response) {
    try {
        const body = (await response.json());
        if (typeof body.detail === "string")
            return body.detail;
        if (Array.isArray(body.detail)) {
            const first = body.detail[0];
            const field = Array.isArray(first.loc) ? first.loc.join(".") : "";
            return `${first.msg ?? "invalid request"}${field ? ` (${field})` : ""}`;
        }
    }
    catch {
        /* non-JSON error body */
    }
    return `HTTP ${response.status}`;
}
const NO_EVENTS = (async function* () { })();
export function httpTransport(endpoint = "/api/generate") {
    return async (body, token) => {
        const headers = { "Content-Type": "application/json" };
        if (token)
            headers["Authorization"] = `Bearer ${token}`;
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
