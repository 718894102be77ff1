"""Hand-rolled SGD and Adam over lists of parameter arrays."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class OptimizerConfig:
    algorithm: str = "adam"  # sgd | adam
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = None

    def __post_init__(self) -> None:
        if self.algorithm not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer algorithm {self.algorithm!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive when set")


class Optimizer:
    """Updates the given parameter arrays in place; owns its moment state."""

    def __init__(self, config: OptimizerConfig, params: list[np.ndarray]):
        self.config = config
        self.params = params
        self.step_count = 0
        if config.algorithm == "adam":
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameter list")
        cfg = self.config
        if cfg.clip_norm is not None:
            total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
            if total > cfg.clip_norm:
                scale = cfg.clip_norm / total
                grads = [g * scale for g in grads]
        self.step_count += 1
        if cfg.algorithm == "sgd":
            for p, g in zip(self.params, grads):
                p -= cfg.learning_rate * g
            return
        t = self.step_count
        bias1 = 1.0 - cfg.beta1 ** t
        bias2 = 1.0 - cfg.beta2 ** t
        for p, g, m, v in zip(self.params, grads, self._m, self._v):
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * (g * g)
            p -= cfg.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + cfg.eps)

    def state(self) -> dict:
        return {
            "algorithm": self.config.algorithm,
            "learning_rate": self.config.learning_rate,
            "clip_norm": self.config.clip_norm,
            "step_count": self.step_count,
        }
