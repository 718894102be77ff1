/** Shared types for the chat client. */
export const DEFAULT_SETTINGS = {
    system_prompt: "",
    memory_k: 10,
    temperature: 0.7,
    top_p: 0.9,
    max_length: 512,
};
