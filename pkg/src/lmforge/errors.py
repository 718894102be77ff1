"""Exception hierarchy shared by every lmforge component.

All domain errors derive from LmforgeError so callers (and the CLI) can
distinguish "your input/data is wrong" from genuine bugs.
"""

from __future__ import annotations


class LmforgeError(Exception):
    """Base class for every error raised by this package."""


# --- configuration / factory ------------------------------------------------

class ConfigError(LmforgeError):
    """A config record failed validation; names the offending field."""

    def __init__(self, field: str, reason: str):
        self.field = field
        self.reason = reason
        super().__init__(f"invalid config field '{field}': {reason}")


class UnknownTaskKindError(LmforgeError):
    def __init__(self, kind: str, known: tuple[str, ...]):
        self.kind = kind
        super().__init__(f"unknown task kind '{kind}' (known: {', '.join(known)})")


class UnknownKeyError(ConfigError):
    """Training config key is neither a general nor a task-specific key."""

    def __init__(self, field: str):
        super().__init__(field, "unrecognized training config key")


class InvalidValueError(ConfigError):
    """Training config key is recognized but its value is out of range."""


class HeadDivisibilityError(ConfigError):
    def __init__(self, hidden_size: int, num_attention_heads: int):
        self.hidden_size = hidden_size
        self.num_attention_heads = num_attention_heads
        super().__init__(
            "hidden_size",
            f"hidden_size {hidden_size} not divisible by num_attention_heads {num_attention_heads}",
        )


class NonPositiveFieldError(ConfigError):
    def __init__(self, field: str):
        super().__init__(field, "must be strictly positive")


# --- providers ----------------------------------------------------------------

class ProviderError(LmforgeError):
    """Base for failures while talking to a chat/embedding provider."""


class ProviderUnreachableError(ProviderError):
    pass


class ProviderHTTPError(ProviderError):
    def __init__(self, status: int, body_excerpt: str):
        self.status = status
        self.body_excerpt = body_excerpt
        super().__init__(f"provider returned HTTP {status}: {body_excerpt}")


class MalformedStreamChunkError(ProviderError):
    pass


class ProviderTimeoutError(ProviderError):
    pass


# --- embeddings / vectors -------------------------------------------------------

class DimensionMismatchError(LmforgeError):
    pass


class ZeroVectorError(LmforgeError):
    pass


# --- memory ---------------------------------------------------------------------

class SystemRoleRejectedError(LmforgeError):
    def __init__(self) -> None:
        super().__init__("system messages are supplied per-request, never stored in memory")


# --- labeller -------------------------------------------------------------------

class UnparsableResponseError(LmforgeError):
    def __init__(self, raw: str):
        self.raw = raw
        super().__init__(f"provider reply is not a JSON array of labels: {raw!r}")


class UnknownLabelError(LmforgeError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"provider assigned a label outside the schema: {name!r}")


# --- vector search ---------------------------------------------------------------

class DuplicateDocIdError(LmforgeError):
    def __init__(self, doc_id: int):
        self.doc_id = doc_id
        super().__init__(f"doc_id {doc_id} already present in index")


class UnknownDocIdError(LmforgeError):
    def __init__(self, doc_id: int):
        self.doc_id = doc_id
        super().__init__(f"doc_id {doc_id} not present in index")


class EmptyIndexError(LmforgeError):
    def __init__(self) -> None:
        super().__init__("index holds no live documents")


class CorruptIndexError(LmforgeError):
    def __init__(self, offset: int, reason: str):
        self.offset = offset
        self.reason = reason
        super().__init__(f"corrupt index file at byte {offset}: {reason}")


class VersionMismatchError(LmforgeError):
    pass


# --- reranker --------------------------------------------------------------------

class ScoreCountMismatchError(LmforgeError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"scorer returned {got} scores for {expected} documents")


class UnparsableScoreError(LmforgeError):
    def __init__(self, doc_index: int, raw: str):
        self.doc_index = doc_index
        self.raw = raw
        super().__init__(f"unparsable relevance score for document {doc_index}: {raw!r}")


# --- tokenizer -------------------------------------------------------------------

class EmptyCorpusError(LmforgeError):
    def __init__(self) -> None:
        super().__init__("training corpus is empty")


class UnknownTokenIdError(LmforgeError):
    def __init__(self, token_id: int):
        self.token_id = token_id
        super().__init__(f"token id {token_id} outside vocabulary")


# --- trainers --------------------------------------------------------------------

class MissingColumnError(LmforgeError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"CSV is missing required column {name!r}")


class EmptyDatasetError(LmforgeError):
    def __init__(self) -> None:
        super().__init__("no usable rows after dropping empty text/label rows")


class MalformedCsvError(LmforgeError):
    def __init__(self, line: int, reason: str):
        self.line = line
        super().__init__(f"malformed CSV at line {line}: {reason}")


class SingleClassError(LmforgeError):
    def __init__(self) -> None:
        super().__init__("training needs at least two distinct classes")


class ShapeMismatchError(LmforgeError):
    pass


class NonFiniteLossError(LmforgeError):
    def __init__(self, step: int):
        self.step = step
        super().__init__(f"loss became non-finite at optimization step {step}")


class CorruptModelError(LmforgeError):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(f"corrupt model file: {reason}")
