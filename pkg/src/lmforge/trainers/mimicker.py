"""Embedding-space knowledge distillation.

A small student map (linear, or one tanh hidden layer) is fitted to a
teacher's embeddings under a composite loss
w1 * MSE(student(x), t) + w2 * (1 - cosine(student(x), t)), with weights
from the training config's loss_weights (default 0.5/0.5). The default
input featurizer is the deterministic hash-to-vector map, so the whole
loop runs offline; the teacher is the only networked component.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..core import TrainingConfig, split_training_config
from ..embeddings import hash_embedding
from ..errors import NonFiniteLossError, ShapeMismatchError
from .classifier import PROVIDER_KEYS
from .optim import Optimizer, OptimizerConfig

logger = logging.getLogger(__name__)

STUDENT_KINDS = ("linear", "mlp1")


@dataclass
class StudentModel:
    """Distilled student; parameters stored float32 for exact persistence."""

    kind: str
    in_dim: int
    out_dim: int
    hidden_dim: int = 0
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def forward(self, X: np.ndarray) -> np.ndarray:
        return student_forward(self.kind, {k: v.astype(np.float64) for k, v in self.params.items()}, X)


def student_forward(kind: str, params: dict[str, np.ndarray], X: np.ndarray) -> np.ndarray:
    if kind == "linear":
        return X @ params["W"].T + params["b"]
    if kind == "mlp1":
        hidden = np.tanh(X @ params["W1"].T + params["b1"])
        return hidden @ params["W2"].T + params["b2"]
    raise ValueError(f"unknown student kind {kind!r}")


def _loss_terms(S: np.ndarray, T: np.ndarray, w_mse: float, w_cos: float):
    n, out_dim = S.shape
    diff = S - T
    mse = float((diff ** 2).mean())
    dS = w_mse * (2.0 / (n * out_dim)) * diff

    s_norm = np.linalg.norm(S, axis=1)
    t_norm = np.linalg.norm(T, axis=1)
    dot = (S * T).sum(axis=1)
    cos = dot / (s_norm * t_norm)
    cos_loss = float((1.0 - cos).mean())
    if w_cos != 0.0:
        dcos_dS = T / (s_norm * t_norm)[:, None] - (dot / (s_norm ** 3 * t_norm))[:, None] * S
        dS = dS - (w_cos / n) * dcos_dS
    return mse, cos_loss, dS


def mimic_loss_and_grads(
    kind: str,
    params: dict[str, np.ndarray],
    X: np.ndarray,
    T: np.ndarray,
    w_mse: float,
    w_cos: float,
) -> tuple[float, dict[str, np.ndarray]]:
    """Composite loss and analytic gradients for either student kind."""
    if kind == "linear":
        S = X @ params["W"].T + params["b"]
        mse, cos_loss, dS = _loss_terms(S, T, w_mse, w_cos)
        grads = {"W": dS.T @ X, "b": dS.sum(axis=0)}
    elif kind == "mlp1":
        pre = X @ params["W1"].T + params["b1"]
        hidden = np.tanh(pre)
        S = hidden @ params["W2"].T + params["b2"]
        mse, cos_loss, dS = _loss_terms(S, T, w_mse, w_cos)
        d_hidden = dS @ params["W2"]
        d_pre = d_hidden * (1.0 - hidden ** 2)
        grads = {
            "W1": d_pre.T @ X,
            "b1": d_pre.sum(axis=0),
            "W2": dS.T @ hidden,
            "b2": dS.sum(axis=0),
        }
    else:
        raise ValueError(f"unknown student kind {kind!r}")
    return w_mse * mse + w_cos * cos_loss, grads


def hash_featurizer(dim: int, seed: int = 0) -> Callable[[Sequence[str]], np.ndarray]:
    """Deterministic offline text featurizer at a configurable (small) dim."""

    def featurize(texts: Sequence[str]) -> np.ndarray:
        return np.asarray([hash_embedding(t, dim, seed) for t in texts], dtype=np.float64)

    return featurize


def _teacher_embed(teacher, texts: Sequence[str]) -> np.ndarray:
    if hasattr(teacher, "embed"):
        return np.asarray(teacher.embed(list(texts)), dtype=np.float64)
    return np.asarray(teacher(list(texts)), dtype=np.float64)


def _init_params(kind: str, in_dim: int, out_dim: int, hidden_dim: int,
                 rng: np.random.Generator) -> dict[str, np.ndarray]:
    if kind == "linear":
        return {
            "W": rng.standard_normal((out_dim, in_dim)) / np.sqrt(in_dim),
            "b": np.zeros(out_dim),
        }
    return {
        "W1": rng.standard_normal((hidden_dim, in_dim)) / np.sqrt(in_dim),
        "b1": np.zeros(hidden_dim),
        "W2": rng.standard_normal((out_dim, hidden_dim)) / np.sqrt(hidden_dim),
        "b2": np.zeros(out_dim),
    }


@dataclass
class MimicReport:
    epoch_losses: list[float] = field(default_factory=list)
    train_mse: float = 0.0
    eval_mse: float = 0.0
    eval_mean_cosine: float = 0.0
    n_train: int = 0
    n_eval: int = 0

    @property
    def initial_loss(self) -> float:
        return self.epoch_losses[0]

    @property
    def final_loss(self) -> float:
        return self.epoch_losses[-1]


def train_mimicker(
    student_spec: dict,
    teacher,
    texts: Sequence[str],
    featurizer: Callable[[Sequence[str]], np.ndarray] | None = None,
    config: TrainingConfig | None = None,
    optimizer: OptimizerConfig | None = None,
) -> tuple[StudentModel, MimicReport]:
    """Fit a student to the teacher's embedding space.

    student_spec: {"kind": "linear"|"mlp1", "in_dim": int, "hidden_dim": int}.
    The report's eval_mean_cosine is measured on the held-out split.
    """
    if not texts:
        raise ValueError("texts must be non-empty")
    config = config or TrainingConfig()
    kind = student_spec.get("kind", "linear")
    if kind not in STUDENT_KINDS:
        raise ValueError(f"unknown student kind {kind!r}")
    in_dim = int(student_spec["in_dim"])
    hidden_dim = int(student_spec.get("hidden_dim", 0))
    if kind == "mlp1" and hidden_dim < 1:
        raise ValueError("mlp1 student needs hidden_dim >= 1")

    seed = int(config.get("seed", 0))
    featurize = featurizer or hash_featurizer(in_dim, seed=seed)
    X = np.asarray(featurize(list(texts)), dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != in_dim:
        raise ShapeMismatchError(f"featurizer produced shape {X.shape}, expected (*, {in_dim})")
    T = _teacher_embed(teacher, texts)
    if T.ndim != 2 or T.shape[0] != X.shape[0]:
        raise ShapeMismatchError(f"teacher produced shape {T.shape} for {X.shape[0]} texts")
    out_dim = T.shape[1]
    declared_out = student_spec.get("out_dim")
    if declared_out is not None and int(declared_out) != out_dim:
        raise ShapeMismatchError(
            f"student out_dim {declared_out} != teacher embedding dim {out_dim}"
        )

    w_mse, w_cos = config.get("loss_weights", (0.5, 0.5))
    rng = np.random.default_rng(seed)
    params = _init_params(kind, in_dim, out_dim, hidden_dim, rng)
    names = sorted(params)
    opt_config = optimizer or OptimizerConfig(
        algorithm="adam", learning_rate=float(config.get("learning_rate", 1e-2))
    )
    opt = Optimizer(opt_config, [params[n] for n in names])

    eval_fraction = float(config.get("eval_fraction", 0.2))
    order = rng.permutation(len(texts))
    n_eval = min(int(round(eval_fraction * len(texts))), len(texts) - 1)
    eval_idx, train_idx = order[:n_eval], order[n_eval:]
    X_train, T_train = X[train_idx], T[train_idx]
    X_eval, T_eval = X[eval_idx], T[eval_idx]

    epochs = int(config.get("num_train_epochs", 100))
    batch_size = int(config.get("batch_size", len(X_train)))
    report = MimicReport(n_train=len(train_idx), n_eval=len(eval_idx))

    for _epoch in range(epochs):
        shuffle = rng.permutation(len(X_train))
        batch_losses = []
        for start in range(0, len(shuffle), batch_size):
            batch = shuffle[start:start + batch_size]
            loss, grads = mimic_loss_and_grads(
                kind, params, X_train[batch], T_train[batch], w_mse, w_cos
            )
            if not np.isfinite(loss):
                raise NonFiniteLossError(opt.step_count + 1)
            opt.step([grads[n] for n in names])
            batch_losses.append(loss)
        report.epoch_losses.append(float(np.mean(batch_losses)))

    student = StudentModel(
        kind=kind, in_dim=in_dim, out_dim=out_dim, hidden_dim=hidden_dim,
        params={n: params[n].astype(np.float32) for n in names},
    )
    S_train = student.forward(X_train)
    report.train_mse = float(((S_train - T_train) ** 2).mean())
    if len(eval_idx):
        S_eval = student.forward(X_eval)
        report.eval_mse = float(((S_eval - T_eval) ** 2).mean())
        cos = (S_eval * T_eval).sum(axis=1) / (
            np.linalg.norm(S_eval, axis=1) * np.linalg.norm(T_eval, axis=1)
        )
        report.eval_mean_cosine = float(cos.mean())
    logger.info(
        "mimicker trained: loss %.5f -> %.5f, eval cosine %.5f",
        report.initial_loss, report.final_loss, report.eval_mean_cosine,
    )
    return student, report


class MimickerTrainer:
    """Task handle: teacher provider + student spec + training config."""

    def __init__(self, teacher, student_spec: dict, config: TrainingConfig,
                 featurizer: Callable | None = None,
                 optimizer: OptimizerConfig | None = None):
        self.teacher = teacher
        self.student_spec = dict(student_spec)
        self.config = config
        self.featurizer = featurizer
        self.optimizer = optimizer

    @classmethod
    def from_config(cls, raw: dict) -> "MimickerTrainer":
        from ..errors import ConfigError
        from ..providers import make_provider

        student_keys = ("student", "in_dim", "hidden_dim", "out_dim", "featurizer_seed")
        provider_cfg = {k: v for k, v in raw.items() if k in PROVIDER_KEYS}
        training_raw = {
            k: v for k, v in raw.items()
            if k not in PROVIDER_KEYS and k not in student_keys
        }
        if "in_dim" not in raw:
            raise ConfigError("in_dim", "required key is missing")
        spec = {
            "kind": raw.get("student", "linear"),
            "in_dim": int(raw["in_dim"]),
            "hidden_dim": int(raw.get("hidden_dim", 0)),
        }
        if raw.get("out_dim") is not None:
            spec["out_dim"] = int(raw["out_dim"])
        if spec["kind"] not in STUDENT_KINDS:
            raise ConfigError("student", f"unknown student kind {spec['kind']!r}")
        config = split_training_config(training_raw)
        featurizer = None
        if "featurizer_seed" in raw:
            featurizer = hash_featurizer(spec["in_dim"], seed=int(raw["featurizer_seed"]))
        return cls(make_provider(provider_cfg), spec, config, featurizer=featurizer)

    def train(self, texts: Sequence[str]):
        return train_mimicker(
            self.student_spec, self.teacher, texts,
            featurizer=self.featurizer, config=self.config, optimizer=self.optimizer,
        )

    def describe(self) -> dict:
        return {
            "task": "mimicker",
            "student": dict(self.student_spec),
            "model": self.teacher.endpoint.model if hasattr(self.teacher, "endpoint") else None,
            "config": {"general": dict(self.config.general),
                       "task_specific": dict(self.config.task_specific)},
        }
