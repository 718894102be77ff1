/** Entry point: wire the store to the DOM once the page is ready. */

import { httpTransport } from "./api.js";
import { ChatStore } from "./state.js";
import { mountChatUi } from "./ui.js";

function boot(): void {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app mount point");
  const endpoint = root.dataset.endpoint ?? "/api/generate";
  const store = new ChatStore(httpTransport(endpoint));
  mountChatUi(root, store);
}

if (document.readyState === "loading") {
  document.addEventListener("DOMContentLoaded", boot);
} else {
  boot();
}
