"""Task factory and configuration layer.

create_task() is the single entry point that instantiates every component
kind from a flat, validated config record. The training-config splitter
routes recognized task-specific keys (a closed allowlist) away from general
training keys; model and tokenizer configs are validated here and persisted
by their consumers, never used to build a network.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Mapping

from .errors import (
    ConfigError,
    HeadDivisibilityError,
    InvalidValueError,
    NonPositiveFieldError,
    UnknownKeyError,
    UnknownTaskKindError,
)

__all__ = [
    "TASK_KINDS",
    "TrainingConfig",
    "ModelConfig",
    "TokenizerConfig",
    "create_task",
    "split_training_config",
    "validate_model_config",
    "TaskFactory",
]

TASK_KINDS = (
    "generator",
    "labeller",
    "embedder",
    "searcher",
    "reranker",
    "mimicker",
    "classifier",
    "tokenizer-trainer",
)


# --- training configuration -----------------------------------------------------

def _positive_real(value) -> float:
    v = float(value)
    if not math.isfinite(v) or v <= 0:
        raise ValueError("must be a positive real")
    return v


def _positive_int(value) -> int:
    if isinstance(value, bool) or int(value) != value or int(value) <= 0:
        raise ValueError("must be a positive integer")
    return int(value)


def _any_int(value) -> int:
    if isinstance(value, bool) or int(value) != value:
        raise ValueError("must be an integer")
    return int(value)


def _path_str(value) -> str:
    if not isinstance(value, str) or not value:
        raise ValueError("must be a non-empty path string")
    return value


def _open_unit_fraction(value) -> float:
    v = float(value)
    if not 0 < v < 1:
        raise ValueError("must lie strictly inside (0, 1)")
    return v


def _unit_interval(value) -> float:
    v = float(value)
    if not 0 <= v <= 1:
        raise ValueError("must lie in [0, 1]")
    return v


def _loss_weights(value) -> tuple[float, float]:
    pair = tuple(value)
    if len(pair) != 2:
        raise ValueError("must be a pair of reals")
    w1, w2 = float(pair[0]), float(pair[1])
    if w1 < 0 or w2 < 0:
        raise ValueError("weights must be non-negative")
    if abs(w1 + w2 - 1.0) > 1e-9:
        raise ValueError("weights must sum to 1")
    return (w1, w2)


GENERAL_KEYS: dict[str, Callable] = {
    "learning_rate": _positive_real,
    "num_train_epochs": _positive_int,
    "batch_size": _positive_int,
    "seed": _any_int,
    "output_dir": _path_str,
    "eval_fraction": _open_unit_fraction,
}

TASK_SPECIFIC_KEYS: dict[str, Callable] = {
    "mlm_probability": _unit_interval,
    "loss_weights": _loss_weights,
}


@dataclass(frozen=True)
class TrainingConfig:
    """Unified training configuration split into general vs task-specific keys."""

    general: dict[str, Any] = field(default_factory=dict)
    task_specific: dict[str, Any] = field(default_factory=dict)

    def get(self, key: str, default=None):
        if key in self.general:
            return self.general[key]
        return self.task_specific.get(key, default)

    def to_json(self) -> str:
        return json.dumps({"general": self.general, "task_specific": self.task_specific},
                          sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "TrainingConfig":
        raw = json.loads(text)
        merged = dict(raw["general"])
        merged.update(raw["task_specific"])
        return split_training_config(merged)


def split_training_config(raw: Mapping[str, Any]) -> TrainingConfig:
    """Route every key of a flat dict into general or task_specific.

    Unrecognized keys are rejected by name; the result is deterministic
    regardless of input key order.
    """
    general: dict[str, Any] = {}
    task_specific: dict[str, Any] = {}
    for key in sorted(raw):
        value = raw[key]
        if key in GENERAL_KEYS:
            try:
                general[key] = GENERAL_KEYS[key](value)
            except (ValueError, TypeError) as exc:
                raise InvalidValueError(key, str(exc)) from exc
        elif key in TASK_SPECIFIC_KEYS:
            try:
                task_specific[key] = TASK_SPECIFIC_KEYS[key](value)
            except (ValueError, TypeError) as exc:
                raise InvalidValueError(key, str(exc)) from exc
        else:
            raise UnknownKeyError(key)
    return TrainingConfig(general=general, task_specific=task_specific)


# --- model configuration ----------------------------------------------------------

@dataclass(frozen=True)
class ModelConfig:
    """Validated-but-never-instantiated encoder hyperparameters."""

    vocab_size: int
    max_position_embeddings: int
    num_attention_heads: int
    num_hidden_layers: int
    hidden_size: int
    intermediate_size: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "ModelConfig":
        return validate_model_config(ModelConfig(**json.loads(text)))


def validate_model_config(cfg: ModelConfig) -> ModelConfig:
    for name, value in asdict(cfg).items():
        if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
            raise NonPositiveFieldError(name)
    if cfg.hidden_size % cfg.num_attention_heads != 0:
        raise HeadDivisibilityError(cfg.hidden_size, cfg.num_attention_heads)
    return cfg


# --- tokenizer configuration --------------------------------------------------------

NUM_SPECIAL_TOKENS = 5  # pad, unk, bos, eos, mask
BYTE_ALPHABET_SIZE = 256


@dataclass(frozen=True)
class TokenizerConfig:
    max_length: int = 512
    vocab_size: int = 1024
    min_frequency: int = 2

    def __post_init__(self) -> None:
        for name in ("max_length", "vocab_size", "min_frequency"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
                raise NonPositiveFieldError(name)
        if self.vocab_size <= NUM_SPECIAL_TOKENS + BYTE_ALPHABET_SIZE:
            raise ConfigError(
                "vocab_size",
                f"must exceed byte alphabet + specials ({NUM_SPECIAL_TOKENS + BYTE_ALPHABET_SIZE})",
            )

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "TokenizerConfig":
        return TokenizerConfig(**json.loads(text))


# --- the factory -----------------------------------------------------------------------

def _require(config: Mapping[str, Any], key: str) -> Any:
    if key not in config:
        raise ConfigError(key, "required key is missing")
    return config[key]


def _build_generator(config: Mapping[str, Any]):
    from .chat_service import ChatGateway
    from .providers import GenerationParams, make_provider

    provider = make_provider(dict(config))
    try:
        defaults = GenerationParams(
            temperature=float(config.get("temperature", 0.7)),
            top_p=float(config.get("top_p", 0.9)),
            max_length=int(config.get("max_length", 512)),
            system_prompt=config.get("system_prompt"),
        )
    except ValueError as exc:
        raise ConfigError("generation_params", str(exc)) from exc
    from .memory import MemoryStore

    memory = MemoryStore(journal_path=config.get("memory_journal"))
    return ChatGateway(provider=provider, memory=memory, defaults=defaults,
                       default_memory_k=int(config.get("memory_k", 10)))


def _build_labeller(config: Mapping[str, Any]):
    from .labeller import Labeller, LabelSchema
    from .providers import make_provider

    schema = LabelSchema(
        labels=dict(_require(config, "labels")),
        multi_label=bool(config.get("multi_label", False)),
    )
    return Labeller(schema=schema, provider=make_provider(dict(config)))


def _build_embedder(config: Mapping[str, Any]):
    from .embeddings import Embedder
    from .providers import make_provider

    batch_size = int(config.get("batch_size", 32))
    if batch_size < 1:
        raise ConfigError("batch_size", "must be a positive integer")
    return Embedder(provider=make_provider(dict(config)), batch_size=batch_size)


def _build_searcher(config: Mapping[str, Any]):
    from .vector_search import FlatIndex, HnswIndex, HnswParams

    dim = _require(config, "dim")
    if not isinstance(dim, int) or dim <= 0:
        raise ConfigError("dim", "must be a positive integer")
    index_type = config.get("index_type", "flat")
    if index_type == "flat":
        return FlatIndex(dim=dim)
    if index_type == "hnsw":
        try:
            params = HnswParams(
                M=int(config.get("M", 16)),
                ef_construction=int(config.get("ef_construction", 200)),
                ef_search=int(config.get("ef_search", 100)),
                rng_seed=int(config.get("rng_seed", 0)),
            )
        except ValueError as exc:
            raise ConfigError("hnsw", str(exc)) from exc
        return HnswIndex(dim=dim, params=params)
    raise ConfigError("index_type", f"unknown index type {index_type!r}")


def _build_reranker(config: Mapping[str, Any]):
    from .reranker import Reranker

    return Reranker.from_config(dict(config))


def _build_mimicker(config: Mapping[str, Any]):
    from .trainers import MimickerTrainer

    return MimickerTrainer.from_config(dict(config))


def _build_classifier(config: Mapping[str, Any]):
    from .trainers import ClassifierTrainer

    return ClassifierTrainer.from_config(dict(config))


def _build_tokenizer_trainer(config: Mapping[str, Any]):
    from .tokenizer import TokenizerTrainer

    try:
        tok_config = TokenizerConfig(
            max_length=int(config.get("max_length", 512)),
            vocab_size=int(config.get("vocab_size", 1024)),
            min_frequency=int(config.get("min_frequency", 2)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError("tokenizer", str(exc)) from exc
    return TokenizerTrainer(config=tok_config)


_REGISTRY: dict[str, Callable[[Mapping[str, Any]], Any]] = {
    "generator": _build_generator,
    "labeller": _build_labeller,
    "embedder": _build_embedder,
    "searcher": _build_searcher,
    "reranker": _build_reranker,
    "mimicker": _build_mimicker,
    "classifier": _build_classifier,
    "tokenizer-trainer": _build_tokenizer_trainer,
}

assert tuple(_REGISTRY) == TASK_KINDS


def create_task(kind: str, config: Mapping[str, Any] | None = None):
    """Instantiate a fully validated, ready-to-use component.

    Validation errors surface here, not at first use. Unknown kinds are an
    error, never a silent default.
    """
    if kind not in _REGISTRY:
        raise UnknownTaskKindError(kind, TASK_KINDS)
    return _REGISTRY[kind](config or {})


class TaskFactory:
    """Static-method facade over create_task, one method per task kind."""

    registry = _REGISTRY

    create_generator = staticmethod(lambda config=None: create_task("generator", config))
    create_labeller = staticmethod(lambda config=None: create_task("labeller", config))
    create_embedder = staticmethod(lambda config=None: create_task("embedder", config))
    create_searcher = staticmethod(lambda config=None: create_task("searcher", config))
    create_reranker = staticmethod(lambda config=None: create_task("reranker", config))
    create_mimicker = staticmethod(lambda config=None: create_task("mimicker", config))
    create_classifier = staticmethod(lambda config=None: create_task("classifier", config))
    create_tokenizer_trainer = staticmethod(
        lambda config=None: create_task("tokenizer-trainer", config)
    )
