"""Central finite-difference verification of the analytic gradients."""

from __future__ import annotations

import numpy as np

from ..rng import make_rng
from .losses import bce_logit_grad, loss_bce
from .model import PatchClassifier


def _float64_twin(model: PatchClassifier) -> PatchClassifier:
    """Same architecture and parameter values at float64."""
    twin = PatchClassifier(model.cfg, seed=0, dtype=np.float64)
    for (_, src), (_, dst) in zip(model.named_parameters(), twin.named_parameters()):
        dst.value[...] = src.value.astype(np.float64)
    twin.set_bn_buffers({k: v.astype(np.float64) for k, v in model.bn_buffers()})
    return twin


def grad_check(
    model: PatchClassifier,
    x: np.ndarray,
    y: np.ndarray,
    epsilon: float = 1e-3,
    n_samples: int = 200,
    seed: int = 0,
    pos_weight: float = 1.0,
) -> float:
    """Max relative error between analytic and numeric gradients.

    Runs in "frozen" mode (batch-norm on fixed statistics, dropout off) so
    the loss is a deterministic function of the parameters.  The analytic
    side is the model's own backward at its native precision; the numeric
    side is (L(th+eps) - L(th-eps)) / (2 eps) evaluated on a float64 twin
    (so the difference quotient is not drowned by forward rounding) with
    the ReLU/pool branch selections locked to the reference forward (so
    the quotient measures the branch the analytic gradient describes,
    instead of jumping kinks).  Returns
    max |g_a - g_n| / max(|g_a| + |g_n|, 1e-6) over `n_samples` randomly
    chosen parameter components.
    """
    x32 = np.ascontiguousarray(x, dtype=model.dtype)
    y = np.asarray(y, dtype=np.float64)

    p = model.forward(x32, "frozen")
    model.zero_grads()
    model.backward_from_logits(bce_logit_grad(p, y, pos_weight))
    analytic = [prm.grad.copy() for prm in model.parameters()]

    twin = _float64_twin(model)
    x64 = np.ascontiguousarray(x, dtype=np.float64)
    twin.forward(x64, "frozen")  # populate branch caches at the reference point
    twin.lock_branches(True)
    twin_params = twin.parameters()

    sizes = np.array([prm.value.size for prm in twin_params])
    total = int(sizes.sum())
    rng = make_rng(seed)
    chosen = rng.choice(total, size=min(n_samples, total), replace=False)
    bounds = np.cumsum(sizes)

    def loss_at() -> float:
        return loss_bce(twin.forward(x64, "frozen"), y, pos_weight)

    worst = 0.0
    for flat in chosen:
        pi = int(np.searchsorted(bounds, flat, side="right"))
        local = int(flat - (bounds[pi - 1] if pi > 0 else 0))
        value = twin_params[pi].value.reshape(-1)
        orig = value[local]
        value[local] = orig + epsilon
        lp = loss_at()
        value[local] = orig - epsilon
        lm = loss_at()
        value[local] = orig
        g_n = (lp - lm) / (2.0 * epsilon)
        g_a = float(analytic[pi].reshape(-1)[local])
        rel = abs(g_a - g_n) / max(abs(g_a) + abs(g_n), 1e-6)
        worst = max(worst, rel)
    return worst
