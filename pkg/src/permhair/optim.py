"""Adam with bias correction and an optional cosine-annealed learning rate."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteGradient, ShapeMismatch


@dataclass(frozen=True)
class CosineSchedule:
    """lr decays from ``lr0`` to ``floor`` over ``total`` steps, then stays at ``floor``."""

    lr0: float
    total: int
    floor: float | None = None

    def __call__(self, step: int) -> float:
        floor = 1e-3 * self.lr0 if self.floor is None else self.floor
        if self.total <= 0:
            return self.lr0
        t = min(step, self.total) / self.total
        return floor + 0.5 * (self.lr0 - floor) * (1.0 + math.cos(math.pi * t))


@dataclass
class OptimState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    schedule: CosineSchedule | None = None
    step: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None

    def current_lr(self) -> float:
        return self.schedule(self.step) if self.schedule is not None else self.lr


def adam_step(params: np.ndarray, grads: np.ndarray, state: OptimState, lr: float | None = None) -> np.ndarray:
    """One Adam update; returns new parameters and advances ``state`` in place."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape:
        raise ShapeMismatch(f"params {params.shape} vs grads {grads.shape}")
    if not np.all(np.isfinite(grads)):
        raise NonFiniteGradient("gradient contains NaN or inf")
    if state.m is None:
        state.m = np.zeros_like(params)
        state.v = np.zeros_like(params)
    elif state.m.shape != params.shape:
        raise ShapeMismatch(f"optimizer state {state.m.shape} vs params {params.shape}")
    if lr is None:
        lr = state.current_lr()
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1 ** state.step)
    v_hat = state.v / (1.0 - state.beta2 ** state.step)
    return params - lr * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass
class Adam:
    """Convenience wrapper holding one :class:`OptimState`."""

    lr: float = 1e-3
    schedule: CosineSchedule | None = None
    state: OptimState = field(init=False)

    def __post_init__(self):
        self.state = OptimState(lr=self.lr, schedule=self.schedule)

    def step(self, params, grads):
        return adam_step(params, grads, self.state)
