"""Softmax classifier head over frozen provider embeddings.

The pipeline embeds texts once, makes a seeded stratified train/eval
split, minimizes mean cross-entropy by mini-batch gradient descent, and
reports eval accuracy and macro-F1. No transformer weights are touched.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..core import TrainingConfig, split_training_config
from ..embeddings import embed_batch
from ..errors import DimensionMismatchError, NonFiniteLossError, SingleClassError
from .data import LabelEncoder
from .optim import Optimizer, OptimizerConfig

logger = logging.getLogger(__name__)

PROVIDER_KEYS = (
    "provider_url", "provider_kind", "model", "api_key", "timeout",
    "max_retries", "provider_seed", "provider_dim",
)


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def cross_entropy_loss_and_grads(
    W: np.ndarray, b: np.ndarray, X: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy of softmax(X W^T + b) and its analytic gradients."""
    n = X.shape[0]
    probs = softmax(X @ W.T + b)
    eps = 1e-12
    loss = float(-np.log(probs[np.arange(n), y] + eps).mean())
    dZ = probs
    dZ[np.arange(n), y] -= 1.0
    dZ /= n
    return loss, dZ.T @ X, dZ.sum(axis=0)


def stratified_split(
    labels: np.ndarray, eval_fraction: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-class seeded shuffle; every class keeps at least one train row."""
    rng = np.random.default_rng(seed)
    train_idx: list[int] = []
    eval_idx: list[int] = []
    for cls in np.unique(labels):
        rows = np.flatnonzero(labels == cls)
        rows = rows[rng.permutation(len(rows))]
        n_eval = int(round(eval_fraction * len(rows)))
        n_eval = min(n_eval, len(rows) - 1)
        eval_idx.extend(rows[:n_eval])
        train_idx.extend(rows[n_eval:])
    return np.sort(np.asarray(train_idx)), np.sort(np.asarray(eval_idx))


def macro_f1(y_true: np.ndarray, y_pred: np.ndarray, num_classes: int) -> float:
    scores = []
    for cls in range(num_classes):
        tp = int(np.sum((y_pred == cls) & (y_true == cls)))
        fp = int(np.sum((y_pred == cls) & (y_true != cls)))
        fn = int(np.sum((y_pred != cls) & (y_true == cls)))
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        scores.append(f1)
    return float(np.mean(scores))


@dataclass
class ClassifierHead:
    """Trained W/b (stored float32 so persistence is bit-exact), plus the
    label encoder and the embedding provider fingerprint."""

    W: np.ndarray
    b: np.ndarray
    encoder: LabelEncoder
    dim: int
    provider_fingerprint: tuple[str, str] | None = None

    @property
    def num_classes(self) -> int:
        return self.W.shape[0]

    def predict_probs(self, X: np.ndarray) -> np.ndarray:
        return softmax(X @ self.W.astype(np.float64).T + self.b.astype(np.float64))


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    eval_accuracy: float = 0.0
    eval_macro_f1: float = 0.0
    n_train: int = 0
    n_eval: int = 0

    @property
    def initial_loss(self) -> float:
        return self.epoch_losses[0]

    @property
    def final_loss(self) -> float:
        return self.epoch_losses[-1]


@dataclass
class Prediction:
    label: str
    probs: dict[str, float]
    warning: str | None = None


def train_classifier(
    texts: Sequence[str],
    labels: Sequence[str],
    provider,
    config: TrainingConfig | None = None,
    optimizer: OptimizerConfig | None = None,
) -> tuple[ClassifierHead, TrainReport]:
    config = config or TrainingConfig()
    encoder = LabelEncoder.from_labels(labels)
    if len(encoder) < 2:
        raise SingleClassError()
    y = encoder.encode(labels)

    embedded = embed_batch(provider, list(texts), batch_size=int(config.get("batch_size", 32)))
    X = np.asarray(embedded, dtype=np.float64)
    dim = X.shape[1]

    seed = int(config.get("seed", 0))
    eval_fraction = float(config.get("eval_fraction", 0.2))
    train_idx, eval_idx = stratified_split(y, eval_fraction, seed)
    X_train, y_train = X[train_idx], y[train_idx]
    X_eval, y_eval = X[eval_idx], y[eval_idx]

    opt_config = optimizer or OptimizerConfig(
        algorithm="adam", learning_rate=float(config.get("learning_rate", 1e-3))
    )
    W = np.zeros((len(encoder), dim), dtype=np.float64)
    b = np.zeros(len(encoder), dtype=np.float64)
    opt = Optimizer(opt_config, [W, b])

    epochs = int(config.get("num_train_epochs", 20))
    batch_size = int(config.get("batch_size", 32))
    rng = np.random.default_rng(seed)
    report = TrainReport(n_train=len(train_idx), n_eval=len(eval_idx))

    for _epoch in range(epochs):
        order = rng.permutation(len(X_train))
        batch_losses = []
        for start in range(0, len(order), batch_size):
            batch = order[start:start + batch_size]
            loss, dW, db = cross_entropy_loss_and_grads(W, b, X_train[batch], y_train[batch])
            if not np.isfinite(loss):
                raise NonFiniteLossError(opt.step_count + 1)
            opt.step([dW, db])
            batch_losses.append(loss)
        report.epoch_losses.append(float(np.mean(batch_losses)))

    head = ClassifierHead(
        W=W.astype(np.float32),
        b=b.astype(np.float32),
        encoder=encoder,
        dim=dim,
        provider_fingerprint=(provider.endpoint.base_url, provider.endpoint.model),
    )
    if len(eval_idx):
        probs = head.predict_probs(X_eval)
        y_pred = probs.argmax(axis=1)
        report.eval_accuracy = float((y_pred == y_eval).mean())
        report.eval_macro_f1 = macro_f1(y_eval, y_pred, len(encoder))
    logger.info(
        "classifier trained: loss %.4f -> %.4f, eval acc %.3f, macro-F1 %.3f",
        report.initial_loss, report.final_loss, report.eval_accuracy, report.eval_macro_f1,
    )
    return head, report


def classify(head: ClassifierHead, texts: Sequence[str], provider) -> list[Prediction]:
    """Argmax label + full softmax distribution per text.

    A provider fingerprint mismatch is a warning (recorded per result), a
    changed embedding dimensionality is an error.
    """
    warning = None
    fingerprint = (provider.endpoint.base_url, provider.endpoint.model)
    if head.provider_fingerprint and fingerprint != tuple(head.provider_fingerprint):
        warning = (
            f"embedding provider {fingerprint} differs from training-time "
            f"{tuple(head.provider_fingerprint)}"
        )
        logger.warning(warning)
    X = np.asarray(embed_batch(provider, list(texts)), dtype=np.float64)
    if X.shape[1] != head.dim:
        raise DimensionMismatchError(
            f"provider now returns dim {X.shape[1]}, head was trained on {head.dim}"
        )
    probs = head.predict_probs(X)
    out = []
    for row in probs:
        label = head.encoder.classes[int(row.argmax())]
        out.append(Prediction(
            label=label,
            probs={cls: float(p) for cls, p in zip(head.encoder.classes, row)},
            warning=warning,
        ))
    return out


class ClassifierTrainer:
    """Task handle wiring a provider and a TrainingConfig to the pipeline."""

    def __init__(self, provider, config: TrainingConfig,
                 optimizer: OptimizerConfig | None = None):
        self.provider = provider
        self.config = config
        self.optimizer = optimizer

    @classmethod
    def from_config(cls, raw: dict) -> "ClassifierTrainer":
        from ..providers import make_provider

        provider_cfg = {k: v for k, v in raw.items() if k in PROVIDER_KEYS}
        training_raw = {k: v for k, v in raw.items() if k not in PROVIDER_KEYS}
        return cls(make_provider(provider_cfg), split_training_config(training_raw))

    def train(self, texts: Sequence[str], labels: Sequence[str]):
        return train_classifier(texts, labels, self.provider, self.config, self.optimizer)

    def train_csv(self, csv_path, text_column: str = "text", label_column: str = "label"):
        from .data import load_dataset

        loaded = load_dataset(csv_path, text_column, label_column)
        head, report = self.train(loaded.texts, loaded.label_names)
        return head, report, loaded

    def describe(self) -> dict:
        return {
            "task": "classifier",
            "model": self.provider.endpoint.model,
            "base_url": self.provider.endpoint.base_url,
            "config": {"general": dict(self.config.general),
                       "task_specific": dict(self.config.task_specific)},
        }
