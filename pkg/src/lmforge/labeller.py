"""LLM-powered text annotation against a user-defined label:condition schema.

The prompt template is normative: a system instruction enumerating the
"label: condition" lines in schema-declaration order, stating single- vs
multi-label mode, and demanding a JSON array of label names only; the user
message is the raw text. Completions run at temperature 0 so the weak
labels are at least reproducible. One corrective retry re-prompts with the
malformed reply before giving up.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import UnknownLabelError, UnparsableResponseError
from .providers import GenerationParams

logger = logging.getLogger(__name__)

__all__ = ["LabelSchema", "LabelResult", "LabelFailure", "Labeller",
           "label_text", "label_batch", "write_labels_csv"]


@dataclass(frozen=True)
class LabelSchema:
    """label-name -> condition text, plus the single/multi-label mode."""

    labels: dict[str, str]
    multi_label: bool = False

    def __post_init__(self) -> None:
        minimum = 1 if self.multi_label else 2
        if len(self.labels) < minimum:
            raise ValueError(
                f"{'multi' if self.multi_label else 'single'}-label mode needs "
                f"at least {minimum} labels"
            )
        for name in self.labels:
            if not name or not name.strip():
                raise ValueError("label names must be non-empty")

    @classmethod
    def from_file(cls, path: str | Path) -> "LabelSchema":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(labels=dict(raw["labels"]), multi_label=bool(raw.get("multi_label", False)))


@dataclass(frozen=True)
class LabelResult:
    text: str
    labels: frozenset[str]
    raw_response: str


@dataclass(frozen=True)
class LabelFailure:
    text: str
    error: str


def build_prompt(schema: LabelSchema) -> str:
    """Deterministic system instruction; byte-identical for equal schemas."""
    lines = ["You are a text annotator. Assign labels to the user's text using these rules:"]
    lines.extend(f"- {name}: {condition}" for name, condition in schema.labels.items())
    if schema.multi_label:
        lines.append("Assign every label whose condition applies (at least one).")
    else:
        lines.append("Assign exactly one label, the single best fit.")
    lines.append(
        'Reply with only a JSON array of label names, e.g. ["'
        + next(iter(schema.labels))
        + '"]. No other text.'
    )
    return "\n".join(lines)


_RETRY_INSTRUCTION = (
    "Your previous reply was not a JSON array of label names. "
    "Previous reply: {reply!r}. Respond again with only the JSON array."
)

_LABEL_PARAMS = GenerationParams(temperature=0.0, top_p=1.0, max_length=128)


def _parse_labels(reply: str, schema: LabelSchema) -> frozenset[str]:
    try:
        parsed = json.loads(reply.strip())
    except json.JSONDecodeError as exc:
        raise UnparsableResponseError(reply) from exc
    if not isinstance(parsed, list) or not parsed or not all(isinstance(x, str) for x in parsed):
        raise UnparsableResponseError(reply)
    names = frozenset(parsed)
    for name in names:
        if name not in schema.labels:
            raise UnknownLabelError(name)
    if not schema.multi_label and len(names) != 1:
        raise UnparsableResponseError(reply)
    return names


def label_text(schema: LabelSchema, text: str, provider) -> LabelResult:
    """Annotate one text; retries once on a malformed reply."""
    if not text.strip():
        raise ValueError("text must be non-empty")
    system = build_prompt(schema)
    messages = [("system", system), ("user", text)]
    reply = provider.complete_text(messages, _LABEL_PARAMS)
    try:
        labels = _parse_labels(reply, schema)
    except UnparsableResponseError:
        retry_messages = [
            ("system", system + "\n" + _RETRY_INSTRUCTION.format(reply=reply)),
            ("user", text),
        ]
        retry_reply = provider.complete_text(retry_messages, _LABEL_PARAMS)
        labels = _parse_labels(retry_reply, schema)
        reply = retry_reply
    return LabelResult(text=text, labels=labels, raw_response=reply)


def label_batch(
    schema: LabelSchema,
    texts: Sequence[str],
    provider,
    concurrency: int = 4,
) -> list[LabelResult | LabelFailure]:
    """Annotate a batch with at most `concurrency` in-flight requests.

    Per-item failures become LabelFailure entries; the batch never aborts.
    Results align index-wise with the inputs.
    """
    if not texts:
        raise ValueError("texts must be non-empty")
    if concurrency < 1:
        raise ValueError("concurrency must be >= 1")

    def one(text: str) -> LabelResult | LabelFailure:
        try:
            return label_text(schema, text, provider)
        except Exception as exc:
            logger.warning("labelling failed for %r: %s", text[:40], exc)
            return LabelFailure(text=text, error=f"{type(exc).__name__}: {exc}")

    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        return list(pool.map(one, texts))


def write_labels_csv(path: str | Path, results: Sequence[LabelResult | LabelFailure]) -> None:
    """CSV columns: text, labels (semicolon-joined), raw_response."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["text", "labels", "raw_response"])
        for result in results:
            if isinstance(result, LabelResult):
                writer.writerow([result.text, ";".join(sorted(result.labels)),
                                 result.raw_response])
            else:
                writer.writerow([result.text, "", f"ERROR: {result.error}"])


@dataclass
class Labeller:
    """Task handle binding a schema to a provider."""

    schema: LabelSchema
    provider: object = None

    def label(self, text: str) -> LabelResult:
        return label_text(self.schema, text, self.provider)

    def label_batch(self, texts: Sequence[str], concurrency: int = 4):
        return label_batch(self.schema, texts, self.provider, concurrency=concurrency)

    def describe(self) -> dict:
        return {
            "task": "labeller",
            "labels": dict(self.schema.labels),
            "multi_label": self.schema.multi_label,
            "model": self.provider.endpoint.model,
        }
