"""Server-side conversational memory with a sliding message window.

Conversations auto-create on first append and hold user/assistant turns
only; the system prompt is supplied per-request and never stored. An
optional append-only JSONL journal (one object per line: conv_id, role,
content, seq) survives restarts via replay.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass
from pathlib import Path

from .errors import SystemRoleRejectedError

__all__ = ["Message", "MemoryStore", "new_conversation_id"]


@dataclass(frozen=True)
class Message:
    role: str  # user | assistant
    content: str
    seq: int


def new_conversation_id() -> str:
    return uuid.uuid4().hex


class MemoryStore:
    """In-process store; concurrent appends to distinct conversations are
    independent, per-conversation operations serialize on one lock."""

    def __init__(self, journal_path: str | Path | None = None):
        self._conversations: dict[str, list[Message]] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()
        self._journal_path = Path(journal_path) if journal_path else None
        self._journal_lock = threading.Lock()
        if self._journal_path and self._journal_path.exists():
            self._replay()

    def _conversation_lock(self, conv_id: str) -> threading.Lock:
        with self._registry_lock:
            if conv_id not in self._locks:
                self._locks[conv_id] = threading.Lock()
                self._conversations.setdefault(conv_id, [])
            return self._locks[conv_id]

    def append(self, conv_id: str, role: str, content: str) -> int:
        """Append one turn; returns the conversation's new message count."""
        if role == "system":
            raise SystemRoleRejectedError()
        if role not in ("user", "assistant"):
            raise ValueError(f"invalid role {role!r}")
        if not content:
            raise ValueError("content must be non-empty for user/assistant messages")
        lock = self._conversation_lock(conv_id)
        with lock:
            messages = self._conversations[conv_id]
            message = Message(role=role, content=content, seq=len(messages))
            messages.append(message)
            if self._journal_path:
                self._journal(conv_id, message)
            return len(messages)

    def window(self, conv_id: str, memory_k: int) -> list[Message]:
        """Last memory_k messages in original order; missing conversation
        or memory_k=0 yields []."""
        if memory_k < 0:
            raise ValueError("memory_k must be >= 0")
        lock = self._conversation_lock(conv_id)
        with lock:
            messages = self._conversations[conv_id]
            if memory_k == 0:
                return []
            return list(messages[-memory_k:])

    def length(self, conv_id: str) -> int:
        with self._conversation_lock(conv_id):
            return len(self._conversations[conv_id])

    def conversation_ids(self) -> list[str]:
        with self._registry_lock:
            return [cid for cid, msgs in self._conversations.items() if msgs]

    def _journal(self, conv_id: str, message: Message) -> None:
        record = {
            "conv_id": conv_id,
            "role": message.role,
            "content": message.content,
            "seq": message.seq,
        }
        line = json.dumps(record, ensure_ascii=False)
        with self._journal_lock:
            with open(self._journal_path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    def _replay(self) -> None:
        with open(self._journal_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                conv = self._conversations.setdefault(record["conv_id"], [])
                conv.append(Message(role=record["role"], content=record["content"], seq=record["seq"]))
        for conv_id in self._conversations:
            self._locks[conv_id] = threading.Lock()
