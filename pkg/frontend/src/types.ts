/** Shared types for the chat client. */

export type Role = "user" | "assistant";

export interface Message {
  role: Role;
  content: string;
}

/** The six request fields the service understands, minus the prompt. */
export interface GenerationSettings {
  system_prompt: string; // empty string = omitted from the request
  memory_k: number;
  temperature: number;
  top_p: number;
  max_length: number;
}

export type SettingsField = keyof GenerationSettings;

export type Connection =
  | { kind: "idle" }
  | { kind: "streaming" }
  | { kind: "error"; message: string };

export interface UiState {
  transcript: Message[];
  /** In-flight assistant buffer; only moves into transcript on the terminal event. */
  pending: string | null;
  pendingPrompt: string | null;
  params: GenerationSettings;
  conversationId: string | null;
  connection: Connection;
}

/** One parsed SSE event from /api/generate. */
export interface ChatEvent {
  delta?: string;
  done?: boolean;
  conversation_id?: string;
  finish_reason?: string;
  output_token_estimate?: number;
  error?: string;
}

export interface TransportResult {
  status: number;
  /** Set when the request failed before any stream started. */
  error?: string;
  events: AsyncIterable<ChatEvent>;
}

export type Transport = (
  body: Record<string, unknown>,
  token: string | null,
) => Promise<TransportResult>;

export const DEFAULT_SETTINGS: GenerationSettings = {
  system_prompt: "",
  memory_k: 10,
  temperature: 0.7,
  top_p: 0.9,
  max_length: 512,
};
