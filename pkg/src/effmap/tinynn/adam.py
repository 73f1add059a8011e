"""Adam optimizer with bias-corrected moment estimates."""

from __future__ import annotations

import numpy as np

from .layers import Param


class AdamState:
    def __init__(self, params: list[Param]):
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]

    def copy(self) -> "AdamState":
        dup = AdamState.__new__(AdamState)
        dup.t = self.t
        dup.m = [m.copy() for m in self.m]
        dup.v = [v.copy() for v in self.v]
        return dup


def adam_step(
    params: list[Param],
    state: AdamState,
    lr: float = 1e-4,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One in-place update; call after gradients are accumulated."""
    state.t += 1
    t = state.t
    for i, p in enumerate(params):
        g = p.grad
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g
        m_hat = state.m[i] / (1.0 - beta1**t)
        v_hat = state.v[i] / (1.0 - beta2**t)
        p.value -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.value.dtype)
