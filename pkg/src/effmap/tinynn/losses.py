"""Sigmoid output and weighted binary cross-entropy."""

from __future__ import annotations

import numpy as np

CLAMP = 1e-7


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    z = np.asarray(z)
    out = np.empty_like(z, dtype=z.dtype)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def loss_bce(pred, target, pos_weight: float = 1.0) -> float:
    """Mean of -[w*t*ln p + (1-t)*ln(1-p)] with p clamped to [1e-7, 1-1e-7]."""
    p = np.clip(np.asarray(pred, dtype=np.float64), CLAMP, 1.0 - CLAMP)
    t = np.asarray(target, dtype=np.float64)
    per = -(pos_weight * t * np.log(p) + (1.0 - t) * np.log(1.0 - p))
    return float(per.mean())


def bce_logit_grad(pred, target, pos_weight: float = 1.0) -> np.ndarray:
    """Gradient of the mean BCE w.r.t. the pre-sigmoid logit.

    Equals (p - t)/batch for unit weight; positives scale by pos_weight.
    """
    p = np.asarray(pred)
    t = np.asarray(target, dtype=p.dtype)
    n = p.shape[0]
    return (pos_weight * t * (p - 1.0) + (1.0 - t) * p).astype(p.dtype) / p.dtype.type(n)
