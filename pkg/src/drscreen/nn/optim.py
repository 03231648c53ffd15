"""Adam, reduce-on-plateau scheduling, and early stopping.

The plateau tracker and the stopper share the same improvement rule: a new
validation loss counts as an improvement when it is at least min_delta below
the best seen so far (a drop of exactly min_delta qualifies).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["AdamState", "adam_step", "PlateauScheduler", "EarlyStopper"]


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @staticmethod
    def for_params(params: dict[str, np.ndarray], keys: list[str]) -> "AdamState":
        return AdamState(
            m={k: np.zeros_like(params[k], dtype=np.float32) for k in keys},
            v={k: np.zeros_like(params[k], dtype=np.float32) for k in keys},
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update, in place, over the keys in `state`."""
    state.t += 1
    t = state.t
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for key, m in state.m.items():
        g = grads[key].astype(np.float32, copy=False)
        v = state.v[key]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        params[key] = params[key] - (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(np.float32)


@dataclass
class PlateauScheduler:
    """Multiply lr by `factor` after `patience` consecutive non-improving
    epochs; never drop below min_lr."""

    lr: float
    factor: float = 0.5
    patience: int = 2
    min_lr: float = 1e-6
    min_delta: float = 1e-4
    best: float = math.inf
    bad_epochs: int = 0

    def __post_init__(self):
        if not 0.0 < self.factor < 1.0:
            raise ValueError("factor must be in (0, 1)")

    def step(self, val_loss: float) -> float:
        if val_loss <= self.best - self.min_delta:
            self.best = val_loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr = max(self.lr * self.factor, self.min_lr)
                self.bad_epochs = 0
        return self.lr


@dataclass
class EarlyStopper:
    """Stop after `patience` consecutive epochs without improvement."""

    patience: int = 3
    min_delta: float = 1e-4
    best: float = math.inf
    bad_epochs: int = 0

    def should_stop(self, val_loss: float) -> bool:
        if val_loss <= self.best - self.min_delta:
            self.best = val_loss
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        return self.bad_epochs >= self.patience
