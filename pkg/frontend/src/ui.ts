/** DOM bindings: transcript, streaming bubble, parameter panel, banner. */

import type { ChatStore } from "./state.js";
import type { SettingsField, UiState } from "./types.js";

const PARAM_FIELDS: Array<{
  field: SettingsField;
  label: string;
  input: "text" | "number";
  step?: string;
}> = [
  { field: "system_prompt", label: "system prompt", input: "text" },
  { field: "memory_k", label: "memory_k", input: "number", step: "1" },
  { field: "temperature", label: "temperature", input: "number", step: "0.1" },
  { field: "top_p", label: "top_p", input: "number", step: "0.05" },
  { field: "max_length", label: "max_length", input: "number", step: "1" },
];

const CONVERSATION_KEY = "lmforge.conversation_id";
const TOKEN_KEY = "lmforge.api_token";

export function mountChatUi(root: HTMLElement, store: ChatStore): void {
  root.innerHTML = `
    <header class="bar">
      <h1>lmforge chat</h1>
      <span class="status" data-role="status">idle</span>
    </header>
    <div class="banner hidden" data-role="banner">
      <span data-role="banner-text"></span>
      <button type="button" data-role="banner-close">×</button>
    </div>
    <main class="layout">
      <section class="chat">
        <div class="transcript" data-role="transcript"></div>
        <form class="composer" data-role="composer">
          <textarea data-role="prompt" rows="3"
            placeholder="Type a prompt — Enter to send, Shift+Enter for a newline"></textarea>
          <button type="submit" data-role="send">Send</button>
        </form>
      </section>
      <aside class="panel" data-role="panel">
        <h2>Parameters</h2>
        <label class="param">api token
          <input type="password" data-role="token" autocomplete="off">
        </label>
      </aside>
    </main>`;

  const transcript = root.querySelector<HTMLElement>('[data-role="transcript"]')!;
  const composer = root.querySelector<HTMLFormElement>('[data-role="composer"]')!;
  const promptBox = root.querySelector<HTMLTextAreaElement>('[data-role="prompt"]')!;
  const sendButton = root.querySelector<HTMLButtonElement>('[data-role="send"]')!;
  const banner = root.querySelector<HTMLElement>('[data-role="banner"]')!;
  const bannerText = root.querySelector<HTMLElement>('[data-role="banner-text"]')!;
  const status = root.querySelector<HTMLElement>('[data-role="status"]')!;
  const panel = root.querySelector<HTMLElement>('[data-role="panel"]')!;
  const tokenBox = root.querySelector<HTMLInputElement>('[data-role="token"]')!;

  for (const spec of PARAM_FIELDS) {
    const label = document.createElement("label");
    label.className = "param";
    label.append(spec.label);
    const input = document.createElement("input");
    input.type = spec.input;
    if (spec.step) input.step = spec.step;
    input.value = String(store.state.params[spec.field]);
    const note = document.createElement("small");
    note.className = "param-error";
    input.addEventListener("change", () => {
      const problem = store.editParam(spec.field, input.value);
      note.textContent = problem ?? "";
      input.classList.toggle("invalid", problem !== null);
      if (problem === null) input.value = String(store.state.params[spec.field]);
    });
    label.append(input, note);
    panel.append(label);
  }

  const storedToken = sessionStorage.getItem(TOKEN_KEY);
  if (storedToken) {
    tokenBox.value = storedToken;
    store.setToken(storedToken);
  }
  tokenBox.addEventListener("change", () => {
    store.setToken(tokenBox.value);
    sessionStorage.setItem(TOKEN_KEY, tokenBox.value);
  });

  store.resumeConversation(sessionStorage.getItem(CONVERSATION_KEY));

  root.querySelector('[data-role="banner-close"]')!
    .addEventListener("click", () => store.dismissError());

  composer.addEventListener("submit", (event) => {
    event.preventDefault();
    void submit();
  });
  promptBox.addEventListener("keydown", (event) => {
    if (event.key === "Enter" && !event.shiftKey) {
      event.preventDefault();
      void submit();
    }
  });

  async function submit(): Promise<void> {
    const text = promptBox.value;
    if (!text.trim() || !store.canSend) return;
    promptBox.value = "";
    await store.sendPrompt(text);
  }

  function bubble(role: string, content: string): HTMLElement {
    const element = document.createElement("div");
    element.className = `bubble ${role}`;
    element.textContent = content;
    return element;
  }

  function render(state: UiState): void {
    transcript.replaceChildren(
      ...state.transcript.map((m) => bubble(m.role, m.content)),
    );
    if (state.pendingPrompt !== null) {
      transcript.append(bubble("user", state.pendingPrompt));
      transcript.append(bubble("assistant streaming", state.pending ?? ""));
    }
    transcript.scrollTop = transcript.scrollHeight;

    const streaming = state.connection.kind === "streaming";
    sendButton.disabled = streaming;
    promptBox.disabled = streaming;
    status.textContent = state.connection.kind;

    if (state.connection.kind === "error") {
      bannerText.textContent = state.connection.message;
      banner.classList.remove("hidden");
    } else {
      banner.classList.add("hidden");
    }
    if (state.conversationId) {
      sessionStorage.setItem(CONVERSATION_KEY, state.conversationId);
    }
  }

  store.subscribe(render);
  render(store.state);
}
