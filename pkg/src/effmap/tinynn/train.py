"""Training loop with the validation-plateau stopping rule."""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from ..errors import ConfigError
from ..rng import make_rng
from .adam import AdamState, adam_step
from .checkpoint import Checkpoint, checkpoint_from_model
from .losses import bce_logit_grad, loss_bce
from .model import PatchClassifier


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_epochs: int = 100
    early_stop_window: int = 10
    early_stop_band: float = 0.05
    early_stop_relative: bool = False
    pos_weight: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.early_stop_window < 1:
            raise ConfigError("early_stop_window must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size and max_epochs must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg


def _plateaued(accs: list[float], cfg: TrainConfig) -> bool:
    if len(accs) < cfg.early_stop_window:
        return False
    window = accs[-cfg.early_stop_window :]
    spread = max(window) - min(window)
    if cfg.early_stop_relative:
        ref = max(abs(sum(window) / len(window)), 1e-12)
        return spread <= cfg.early_stop_band * ref
    return spread <= cfg.early_stop_band


def predict_patches(model: PatchClassifier, x: np.ndarray, chunk: int = 64) -> np.ndarray:
    """Eval-mode probabilities for a stack of patches."""
    return model.predict_proba(np.asarray(x), chunk=chunk)


def train(
    model: PatchClassifier,
    train_x: np.ndarray,
    train_y: np.ndarray,
    val_x: np.ndarray,
    val_y: np.ndarray,
    cfg: TrainConfig,
) -> tuple[Checkpoint, dict]:
    """Adam/BCE epochs with seeded shuffling.

    Stops when the last `early_stop_window` validation accuracies span at
    most `early_stop_band` (checked once that many epochs exist) or at
    max_epochs; returns the checkpoint of the best validation accuracy
    plus the full history.  Ties on accuracy resolve to the latest epoch:
    validation sets are small enough that exact ties are routine, and the
    longer-trained model is the better bet.
    """
    cfg.validate()
    if len(train_x) == 0 or len(val_x) == 0:
        raise ConfigError("train and validation sets must be non-empty")
    train_y = np.asarray(train_y, dtype=np.float64)
    val_y = np.asarray(val_y, dtype=np.float64)

    rng = make_rng(cfg.seed)
    model.set_dropout_rng(rng)
    params = model.parameters()
    opt = AdamState(params)
    history: dict = {"train_loss": [], "val_accuracy": [], "stopped_epoch": 0, "best_epoch": 0}
    best_acc = -1.0
    best_ckpt = None

    n = len(train_x)
    for epoch in range(1, cfg.max_epochs + 1):
        perm = rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            xb = train_x[idx]
            yb = train_y[idx]
            p = model.forward(xb, "train")
            losses.append(loss_bce(p, yb, cfg.pos_weight))
            model.zero_grads()
            model.backward_from_logits(bce_logit_grad(p, yb, cfg.pos_weight))
            adam_step(params, opt, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
        val_p = model.predict_proba(val_x)
        val_acc = float(np.mean((val_p >= 0.5) == (val_y == 1)))
        history["train_loss"].append(float(np.mean(losses)))
        history["val_accuracy"].append(val_acc)
        if val_acc >= best_acc:
            best_acc = val_acc
            history["best_epoch"] = epoch
            best_ckpt = checkpoint_from_model(
                model, adam_state=opt, train_config=cfg.to_dict()
            )
        history["stopped_epoch"] = epoch
        if _plateaued(history["val_accuracy"], cfg):
            break
    best_ckpt.history = {k: v for k, v in history.items()}
    return best_ckpt, history
