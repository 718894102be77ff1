/** Framework-free chat state machine.
 *
 * Owns the transcript, the in-flight buffer, generation parameters, and the
 * conversation id. Enforces single-flight sends: while one request streams,
 * further sends are rejected. The transcript only reflects a turn after the
 * server's terminal event; any failure (HTTP error, mid-stream error event,
 * transport exception) surfaces as an error banner and leaves the
 * transcript exactly as it was.
 */

import type { SettingsField, Transport, UiState } from "./types.js";
import { DEFAULT_SETTINGS } from "./types.js";

export type Listener = (state: UiState) => void;

/** Returns an error message, or null when the value is acceptable. The
 * rules mirror the server's validation exactly. */
export function validateSetting(field: SettingsField, value: unknown): string | null {
  if (field === "system_prompt") {
    return typeof value === "string" ? null : "system_prompt must be text";
  }
  const num = typeof value === "number" ? value : Number(value);
  if (!Number.isFinite(num)) return `${field} must be a number`;
  switch (field) {
    case "memory_k":
      return Number.isInteger(num) && num >= 0
        ? null : "memory_k must be an integer ≥ 0";
    case "temperature":
      return num >= 0 ? null : "temperature must be ≥ 0";
    case "top_p":
      return num > 0 && num <= 1 ? null : "top_p must be in (0, 1]";
    case "max_length":
      return Number.isInteger(num) && num >= 1
        ? null : "max_length must be an integer ≥ 1";
  }
}

export class ChatStore {
  readonly state: UiState = {
    transcript: [],
    pending: null,
    pendingPrompt: null,
    params: { ...DEFAULT_SETTINGS },
    conversationId: null,
    connection: { kind: "idle" },
  };

  private listeners: Listener[] = [];
  private token: string | null = null;

  constructor(private transport: Transport) {}

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private notify(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  setToken(token: string | null): void {
    this.token = token && token.trim() ? token.trim() : null;
  }

  /** Restores a previous session's conversation id (e.g. from
   * sessionStorage) so the next turn resumes the same server-side memory. */
  resumeConversation(conversationId: string | null): void {
    this.state.conversationId = conversationId;
    this.notify();
  }

  get canSend(): boolean {
    return this.state.connection.kind !== "streaming";
  }

  /** Validates and applies one parameter edit; subsequent requests carry
   * the new value. Returns the inline error message, or null on success. */
  editParam(field: SettingsField, value: unknown): string | null {
    const problem = validateSetting(field, value);
    if (problem) return problem;
    const params = this.state.params as Record<SettingsField, unknown>;
    params[field] = field === "system_prompt" ? String(value) : Number(value);
    this.notify();
    return null;
  }

  buildRequestBody(prompt: string): Record<string, unknown> {
    const { params, conversationId } = this.state;
    const body: Record<string, unknown> = {
      prompt,
      memory_k: params.memory_k,
      temperature: params.temperature,
      top_p: params.top_p,
      max_length: params.max_length,
    };
    if (params.system_prompt.trim()) body.system_prompt = params.system_prompt;
    if (conversationId) body.conversation_id = conversationId;
    return body;
  }

  /** Sends one prompt. Resolves true when the turn committed to the
   * transcript, false when it was blocked or failed. */
  async sendPrompt(text: string): Promise<boolean> {
    const prompt = text.trim();
    if (!prompt || !this.canSend) return false;

    this.state.connection = { kind: "streaming" };
    this.state.pendingPrompt = prompt;
    this.state.pending = "";
    this.notify();

    const fail = (message: string): false => {
      this.state.pending = null;
      this.state.pendingPrompt = null;
      this.state.connection = { kind: "error", message };
      this.notify();
      return false;
    };

    let result;
    try {
      result = await this.transport(this.buildRequestBody(prompt), this.token);
    } catch (error) {
      return fail(`request failed: ${String(error)}`);
    }
    if (result.error || result.status >= 400) {
      return fail(result.error ?? `HTTP ${result.status}`);
    }

    try {
      for await (const event of result.events) {
        if (event.delta) {
          this.state.pending = (this.state.pending ?? "") + event.delta;
          this.notify();
        }
        if (event.done) {
          if (event.finish_reason === "error") {
            return fail(event.error ?? "provider stream failed");
          }
          this.state.transcript.push({ role: "user", content: prompt });
          this.state.transcript.push({
            role: "assistant",
            content: this.state.pending ?? "",
          });
          if (event.conversation_id) {
            this.state.conversationId = event.conversation_id;
          }
          this.state.pending = null;
          this.state.pendingPrompt = null;
          this.state.connection = { kind: "idle" };
          this.notify();
          return true;
        }
      }
    } catch (error) {
      return fail(`stream broke: ${String(error)}`);
    }
    return fail("stream ended without a terminal event");
  }

  dismissError(): void {
    if (this.state.connection.kind === "error") {
      this.state.connection = { kind: "idle" };
      this.notify();
    }
  }
}
