"""The residual 3D patch classifier.

Five convolutional blocks (conv -> batch-norm -> ReLU -> 2^3 max pool),
skip connections joining block 1 to block 3 and block 3 to block 5 (each
skip: adaptive average pool to the target's spatial dims, 1x1x1 channel
projection, added after the target block's pool), then global average
pool -> dropout -> dense(100) -> ReLU -> dropout -> dense(1) -> sigmoid.

Weights and biases initialize from U(-1/sqrt(fan_in), 1/sqrt(fan_in))
drawn from one seeded PCG64 stream in construction order (weight then
bias per layer); batch-norm starts at gamma 1, beta 0.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from ..errors import ConfigError, ShapeError
from ..rng import make_rng
from .layers import (
    AdaptiveAvgPool3d,
    BatchNorm3d,
    Conv3d,
    Dense,
    Dropout,
    GlobalAvgPool,
    MaxPool3d,
    Param,
    ReLU,
)
from .losses import sigmoid


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 2
    widths: tuple[int, int, int, int, int] = (8, 16, 32, 32, 64)
    first_kernel: int = 7
    kernel: int = 3
    dense_width: int = 100
    dropout: float = 0.5

    def validate(self) -> None:
        if len(self.widths) != 5 or any(w <= 0 for w in self.widths):
            raise ConfigError(f"widths must be 5 positive ints, got {self.widths}")
        if self.in_channels < 1 or self.dense_width < 1:
            raise ConfigError("in_channels and dense_width must be >= 1")
        if self.first_kernel % 2 == 0 or self.kernel % 2 == 0:
            raise ConfigError("kernels must be odd")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        kwargs = dict(d)
        if "widths" in kwargs:
            kwargs["widths"] = tuple(kwargs["widths"])
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


def pooled_trace(size: int, blocks: int = 5) -> list[int]:
    """Spatial size after each pool: floor(d/2), clamped at 1."""
    dims = []
    d = size
    for _ in range(blocks):
        d = max(d // 2, 1)
        dims.append(d)
    return dims


class PatchClassifier:
    def __init__(self, cfg: ModelConfig, seed: int = 0, dtype=np.float32):
        cfg.validate()
        self.cfg = cfg
        self.dtype = np.dtype(dtype).type
        rng = make_rng(seed)
        w = cfg.widths
        dt = dtype

        self.convs = [
            Conv3d(cfg.in_channels, w[0], cfg.first_kernel, rng, dt),
            Conv3d(w[0], w[1], cfg.kernel, rng, dt),
            Conv3d(w[1], w[2], cfg.kernel, rng, dt),
            Conv3d(w[2], w[3], cfg.kernel, rng, dt),
            Conv3d(w[3], w[4], cfg.kernel, rng, dt),
        ]
        self.bns = [BatchNorm3d(c, dtype=dt) for c in w]
        self.relus = [ReLU() for _ in range(5)]
        self.pools = [MaxPool3d() for _ in range(5)]
        self.skip13 = Conv3d(w[0], w[2], 1, rng, dt)
        self.skip35 = Conv3d(w[2], w[4], 1, rng, dt)
        self._adapt13 = None  # sized at forward time
        self._adapt35 = None
        self.gap = GlobalAvgPool()
        self.drop1 = Dropout(cfg.dropout)
        self.dense1 = Dense(w[4], cfg.dense_width, rng, dt)
        self.relu_head = ReLU()
        self.drop2 = Dropout(cfg.dropout)
        self.dense2 = Dense(cfg.dense_width, 1, rng, dt)

        self._layers_with_params = (
            self.convs + self.bns + [self.skip13, self.skip35, self.dense1, self.dense2]
        )

    # -- parameter plumbing -------------------------------------------------

    _LAYER_NAMES = (
        "conv1",
        "conv2",
        "conv3",
        "conv4",
        "conv5",
        "bn1",
        "bn2",
        "bn3",
        "bn4",
        "bn5",
        "skip13",
        "skip35",
        "dense1",
        "dense2",
    )

    def parameters(self) -> list[Param]:
        return [p for layer in self._layers_with_params for p in layer.params]

    def named_parameters(self) -> list[tuple[str, Param]]:
        out = []
        for name, layer in zip(self._LAYER_NAMES, self._layers_with_params):
            for p in layer.params:
                out.append((f"{name}.{p.name}", p))
        return out

    def bn_buffers(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, bn in enumerate(self.bns):
            out.append((f"bn{i + 1}.running_mean", bn.running_mean))
            out.append((f"bn{i + 1}.running_var", bn.running_var))
        return out

    def set_bn_buffers(self, buffers: dict[str, np.ndarray]) -> None:
        for i, bn in enumerate(self.bns):
            bn.running_mean = buffers[f"bn{i + 1}.running_mean"].copy()
            bn.running_var = buffers[f"bn{i + 1}.running_var"].copy()

    def param_count(self) -> int:
        return int(sum(p.value.size for p in self.parameters()))

    def zero_grads(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def set_dropout_rng(self, rng) -> None:
        self.drop1.rng = rng
        self.drop2.rng = rng

    def lock_branches(self, locked: bool) -> None:
        """Pin ReLU masks and pool argmax selections to the last forward
        (used while gradient-checking, where the loss must be smooth)."""
        for layer in self.relus + self.pools + [self.relu_head]:
            layer.locked = locked

    # -- forward / backward ---------------------------------------------------

    def forward_logits(self, x: np.ndarray, mode: str = "eval") -> np.ndarray:
        if x.ndim != 5 or x.shape[1] != self.cfg.in_channels:
            raise ShapeError(
                f"expected (B, {self.cfg.in_channels}, S, S, S) input, got {x.shape}"
            )
        x = np.ascontiguousarray(x, dtype=self.dtype)

        def block(i, inp):
            h = self.convs[i].forward(inp, mode)
            h = self.bns[i].forward(h, mode)
            h = self.relus[i].forward(h, mode)
            return self.pools[i].forward(h, mode)

        b1 = block(0, x)
        b2 = block(1, b1)
        p3 = block(2, b2)
        self._adapt13 = AdaptiveAvgPool3d(p3.shape[2:])
        s13 = self.skip13.forward(self._adapt13.forward(b1, mode), mode)
        b3 = p3 + s13
        b4 = block(3, b3)
        p5 = block(4, b4)
        self._adapt35 = AdaptiveAvgPool3d(p5.shape[2:])
        s35 = self.skip35.forward(self._adapt35.forward(b3, mode), mode)
        b5 = p5 + s35

        g = self.gap.forward(b5, mode)
        h = self.drop1.forward(g, mode)
        h = self.dense1.forward(h, mode)
        h = self.relu_head.forward(h, mode)
        h = self.drop2.forward(h, mode)
        z = self.dense2.forward(h, mode)
        return z[:, 0]

    def forward(self, x: np.ndarray, mode: str = "eval") -> np.ndarray:
        """Probability of positive response per sample, in (0, 1)."""
        return sigmoid(self.forward_logits(x, mode))

    def backward_from_logits(self, dz: np.ndarray) -> None:
        """Accumulate parameter gradients for the last forward pass."""
        dz = np.asarray(dz, dtype=self.dtype)
        d = self.dense2.backward(dz[:, None])
        d = self.drop2.backward(d)
        d = self.relu_head.backward(d)
        d = self.dense1.backward(d)
        d = self.drop1.backward(d)
        d_b5 = self.gap.backward(d)

        # b5 = p5 + skip35(adapt35(b3)); b4 feeds block 5
        d_b3_skip = self._adapt35.backward(self.skip35.backward(d_b5))
        d_b4 = self._unblock(4, d_b5)
        d_b3 = self._unblock(3, d_b4) + d_b3_skip

        # b3 = p3 + skip13(adapt13(b1)); b2 feeds block 3
        d_b1_skip = self._adapt13.backward(self.skip13.backward(d_b3))
        d_b2 = self._unblock(2, d_b3)
        d_b1 = self._unblock(1, d_b2) + d_b1_skip
        self._unblock(0, d_b1)

    def _unblock(self, i, dy):
        d = self.pools[i].backward(dy)
        d = self.relus[i].backward(d)
        d = self.bns[i].backward(d)
        return self.convs[i].backward(d)

    def predict_proba(self, x: np.ndarray, chunk: int = 64) -> np.ndarray:
        """Eval-mode probabilities, batched to bound memory."""
        if len(x) == 0:
            return np.zeros(0, dtype=np.float64)
        outs = [self.forward(x[i : i + chunk], "eval") for i in range(0, len(x), chunk)]
        return np.concatenate(outs).astype(np.float64)


def build_model(cfg: ModelConfig, seed: int = 0, dtype=np.float32) -> PatchClassifier:
    return PatchClassifier(cfg, seed=seed, dtype=dtype)
