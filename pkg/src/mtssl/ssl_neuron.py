"""Semi-supervised output neuron.

The neuron sums the tiling activity through weights ``w`` (scaled by
``mu``) and the label channel ``z`` through a fixed unit weight, then
squashes with either a hard clip or ``tanh``. The weights follow a running
mean of ``y * h``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

RULES = ("clipped", "tanh")


@dataclass(frozen=True)
class SslParams:
    mu: float = 1000.0
    rule: str = "clipped"

    def __post_init__(self):
        if not self.mu >= 0:
            raise ValueError(f"mu must be >= 0 (got {self.mu})")
        if self.rule not in RULES:
            raise ValueError(f"rule must be one of {RULES} (got {self.rule!r})")


@dataclass
class SslState:
    w: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, m: int) -> "SslState":
        return cls(np.zeros(m), 0)


@dataclass(frozen=True)
class LabeledInput:
    h: np.ndarray
    z: int = 0

    def __post_init__(self):
        if self.z not in (-1, 0, 1):
            raise ValueError(f"label channel must be -1, 0 or +1 (got {self.z})")


def activation(state: SslState, inp: LabeledInput, params: SslParams) -> float:
    return params.mu * float(state.w @ inp.h) + inp.z


def predict_clipped(state: SslState, inp: LabeledInput, params: SslParams) -> float:
    return max(-1.0, min(1.0, activation(state, inp, params)))


def predict_tanh(state: SslState, inp: LabeledInput, params: SslParams) -> float:
    return math.tanh(activation(state, inp, params))


def predict(state: SslState, inp: LabeledInput, params: SslParams) -> float:
    if params.rule == "tanh":
        return predict_tanh(state, inp, params)
    return predict_clipped(state, inp, params)


def update_w(state: SslState, y: float, h) -> SslState:
    """Running-mean update ``w <- t/(t+1) w + y h/(t+1)``."""
    t = state.t
    w = (t / (t + 1)) * state.w + (y / (t + 1)) * np.asarray(h, dtype=float)
    return SslState(w, t + 1)


def step(state: SslState, inp: LabeledInput, params: SslParams) -> tuple[float, SslState]:
    y = predict(state, inp, params)
    return y, update_w(state, y, inp.h)


def eval_offline_objective(H, z, y, params: SslParams) -> float:
    """Batch objective ``||y - z||^2 - (mu/T) y^T H^T H y`` for ``H`` of shape (m, T)."""
    H = np.asarray(H, dtype=float)
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    T = H.shape[1]
    Hy = H @ y
    return float(np.sum((y - z) ** 2) - params.mu / T * (Hy @ Hy))


def epoch_fixed_point(H, z, params: SslParams, epochs: int = 2000) -> np.ndarray:
    """Replay the same T samples repeatedly through the online rules.

    Returns the outputs of the final epoch. The running mean keeps counting
    across epochs, so ``w`` settles on the batch average of ``y h``.
    """
    H = np.asarray(H, dtype=float)
    m, T = H.shape
    state = SslState.zeros(m)
    y = np.zeros(T)
    for _ in range(epochs):
        for t in range(T):
            y[t], state = step(state, LabeledInput(H[:, t], int(z[t])), params)
    return y
