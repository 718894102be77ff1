/** Incremental SSE parsing over raw byte chunks.
 *
 * The service frames every event as one `data: <json>` line followed by a
 * blank line; a `data: [DONE]` sentinel (not emitted by lmforge, but part
 * of the wider dialect) terminates the stream. Chunk boundaries can fall
 * anywhere, including inside a multi-byte UTF-8 sequence.
 */
export async function* parseSseStream(chunks) {
    const decoder = new TextDecoder();
    let buffer = "";
    for await (const chunk of chunks) {
        buffer += decoder.decode(chunk, { stream: true });
        let newline;
        while ((newline = buffer.indexOf("\n")) >= 0) {
            const line = buffer.slice(0, newline).replace(/\r$/, "");
            buffer = buffer.slice(newline + 1);
            const event = parseLine(line);
            if (event === END_OF_STREAM)
                return;
            if (event)
                yield event;
        }
    }
    const tail = parseLine(buffer.replace(/\r$/, ""));
    if (tail && tail !== END_OF_STREAM)
        yield tail;
}
const END_OF_STREAM = Symbol("end-of-stream");
function parseLine(line) {
    if (!line.startsWith("data: "))
        return null;
    const payload = line.slice("data: ".length);
    if (payload === "[DONE]")
        return END_OF_STREAM;
    try {
        return JSON.parse(payload);
    }
    catch {
        throw new Error(`malformed SSE payload: ${payload}`);
    }
}
/** Adapts a fetch body to an async iterable without relying on native
 * ReadableStream iteration (absent in some browsers). */
export async function* streamChunks(body) {
    const reader = body.getReader();
    try {
        for (;;) {
            const { done, value } = await reader.read();
            if (done)
                return;
            if (value)
                yield value;
        }
    }
    finally {
        reader.releaseLock();
    }
}
