"""Adam with bias correction, plus the training hyperparameter record."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import Tensor


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 256
    l2_lambda: float = 0.0
    epochs: int = 50
    seed: int = 0
    selection: str = "best"  # "best" (test weighted F1) or "final"

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError(f"betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.l2_lambda < 0:
            raise ConfigError(f"l2_lambda must be >= 0, got {self.l2_lambda}")
        if self.selection not in ("best", "final"):
            raise ConfigError(f"selection must be 'best' or 'final', got {self.selection!r}")


@dataclass
class AdamState:
    m: Tensor
    v: Tensor
    t: int = 0

    @classmethod
    def zeros_like(cls, param: Tensor) -> "AdamState":
        return cls(np.zeros_like(param), np.zeros_like(param), 0)


def adam_step(param: Tensor, grad: Tensor, state: AdamState, cfg: TrainConfig) -> tuple[Tensor, AdamState]:
    """One Adam update; returns the new parameter and a new state, inputs untouched."""
    if not (param.shape == grad.shape == state.m.shape == state.v.shape):
        raise ShapeError(f"shape mismatch: param {param.shape}, grad {grad.shape}, "
                         f"m {state.m.shape}, v {state.v.shape}")
    b1, b2 = cfg.beta1, cfg.beta2
    t = state.t + 1
    m = b1 * state.m + (1.0 - b1) * grad
    v = b2 * state.v + (1.0 - b2) * (grad * grad)
    m_hat = m / (1.0 - b1 ** t)
    v_hat = v / (1.0 - b2 ** t)
    new = param - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    return new, AdamState(m, v, t)
