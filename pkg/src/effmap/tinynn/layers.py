"""Layers with explicit forward/backward passes.

Every layer caches what its backward pass needs on the instance, so the
pattern is strictly forward -> backward per batch.  Modes:

    "train"   batch statistics, dropout active
    "eval"    running statistics, dropout is identity
    "frozen"  like eval but used while gradient-checking, so batch-norm
              gradients flow through fixed statistics

3D convolutions run in the frequency domain (zero-padded real FFTs),
which is exact up to float rounding and far faster than direct loops at
patch scale.  The backward weight gradient is a circular correlation of
the cached input spectrum with the output-gradient spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from ..errors import ShapeError


@dataclass
class Param:
    name: str
    value: np.ndarray
    grad: np.ndarray | None = None

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)


class Layer:
    params: list[Param]

    def __init__(self):
        self.params = []

    def zero_grads(self):
        for p in self.params:
            p.zero_grad()


def _spectra_matmul(a: np.ndarray, b: np.ndarray, pattern: str) -> np.ndarray:
    """Channel contraction between two spectra.

    pattern "fwd":  a[b,i,...] * w[o,i,...] -> y[b,o,...]
    pattern "bwd":  dy[b,o,...] * w[o,i,...] -> dx[b,i,...]
    pattern "wgt":  x[b,i,...] * dy[b,o,...] -> dw[o,i,...]
    """
    subscripts = {
        "fwd": "bi...,oi...->bo...",
        "bwd": "bo...,oi...->bi...",
        "wgt": "bi...,bo...->oi...",
    }[pattern]
    return np.einsum(subscripts, a, b, optimize=True)


class Conv3d(Layer):
    """3D convolution, stride 1, same (zero) padding, odd kernel."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int, rng, dtype=np.float32):
        super().__init__()
        if kernel % 2 == 0:
            raise ShapeError(f"kernel must be odd, got {kernel}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        fan_in = in_channels * kernel**3
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(out_channels, in_channels, kernel, kernel, kernel))
        self.weight = Param("weight", w.astype(dtype))
        # biases share the fan-in bound; exact zeros would park dead blocks
        # right on the ReLU kink, where finite differences are ill-posed
        self.bias = Param("bias", rng.uniform(-bound, bound, size=out_channels).astype(dtype))
        self.params = [self.weight, self.bias]
        self._cache = None

    def _fft_shape(self, spatial):
        return tuple(sfft.next_fast_len(s + self.kernel - 1, real=True) for s in spatial)

    def forward(self, x: np.ndarray, mode: str = "eval") -> np.ndarray:
        if x.ndim != 5 or x.shape[1] != self.in_channels:
            raise ShapeError(
                f"conv expects (B, {self.in_channels}, D, H, W), got {x.shape}"
            )
        spatial = x.shape[2:]
        shape = self._fft_shape(spatial)
        axes = (-3, -2, -1)
        xf = sfft.rfftn(x, s=shape, axes=axes)
        w = self.weight.value
        kf = sfft.rfftn(w[:, :, ::-1, ::-1, ::-1], s=shape, axes=axes)
        yf = _spectra_matmul(xf, kf, "fwd")
        y_full = sfft.irfftn(yf, s=shape, axes=axes)
        c = self.kernel // 2
        y = y_full[..., c : c + spatial[0], c : c + spatial[1], c : c + spatial[2]]
        y = np.ascontiguousarray(y) + self.bias.value[None, :, None, None, None]
        self._cache = (xf, spatial, shape)
        return y.astype(x.dtype, copy=False)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xf, spatial, shape = self._cache
        axes = (-3, -2, -1)
        c = self.kernel // 2
        k = self.kernel
        dyf = sfft.rfftn(dy, s=shape, axes=axes)

        # input gradient: linear convolution of dy with the (unreversed) kernel
        kf = sfft.rfftn(self.weight.value, s=shape, axes=axes)
        dxf = _spectra_matmul(dyf, kf, "bwd")
        dx_full = sfft.irfftn(dxf, s=shape, axes=axes)
        dx = np.ascontiguousarray(
            dx_full[..., c : c + spatial[0], c : c + spatial[1], c : c + spatial[2]]
        )

        # weight gradient: circular correlation of x with dy at lags q - c
        gf = _spectra_matmul(xf, np.conj(dyf), "wgt")
        z = sfft.irfftn(gf, s=shape, axes=axes)
        z = np.roll(z, shift=(c, c, c), axis=axes)
        self.weight.grad += z[..., :k, :k, :k]
        self.bias.grad += dy.sum(axis=(0, 2, 3, 4))
        return dx.astype(dy.dtype, copy=False)


class BatchNorm3d(Layer):
    """Per-channel batch normalization with running statistics.

    Biased variance is used both for the batch and the running estimate;
    running stats update only in train mode.
    """

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1, dtype=np.float32):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.gamma = Param("gamma", np.ones(channels, dtype=dtype))
        self.beta = Param("beta", np.zeros(channels, dtype=dtype))
        self.params = [self.gamma, self.beta]
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self._cache = None

    def forward(self, x: np.ndarray, mode: str = "eval") -> np.ndarray:
        red = (0, 2, 3, 4)
        if mode == "train":
            mu = x.mean(axis=red)
            var = x.var(axis=red)
            m = self.momentum
            self.running_mean = ((1 - m) * self.running_mean + m * mu).astype(x.dtype)
            self.running_var = ((1 - m) * self.running_var + m * var).astype(x.dtype)
        else:
            mu = self.running_mean
            var = self.running_var
        invstd = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu[None, :, None, None, None]) * invstd[None, :, None, None, None]
        y = (
            self.gamma.value[None, :, None, None, None] * xhat
            + self.beta.value[None, :, None, None, None]
        )
        n = x.shape[0] * x.shape[2] * x.shape[3] * x.shape[4]
        self._cache = (xhat, invstd, mode, n)
        return y.astype(x.dtype, copy=False)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xhat, invstd, mode, n = self._cache
        red = (0, 2, 3, 4)
        dbeta = dy.sum(axis=red)
        dgamma = (dy * xhat).sum(axis=red)
        self.beta.grad += dbeta
        self.gamma.grad += dgamma
        g = self.gamma.value[None, :, None, None, None]
        s = invstd[None, :, None, None, None]
        if mode == "train":
            dx = (
                g
                * s
                / n
                * (
                    n * dy
                    - dbeta[None, :, None, None, None]
                    - xhat * dgamma[None, :, None, None, None]
                )
            )
        else:
            dx = dy * g * s
        return dx.astype(dy.dtype, copy=False)


class ReLU(Layer):
    """Rectifier.  With `locked` set, forward reuses the last mask, which
    pins the active piecewise-linear branch while gradient-checking."""

    locked = False

    def forward(self, x: np.ndarray, mode: str = "eval") -> np.ndarray:
        if not self.locked:
            self._mask = x > 0
        return np.where(self._mask, x, x.dtype.type(0))

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return np.where(self._mask, dy, dy.dtype.type(0))


class MaxPool3d(Layer):
    """2x2x2 max pooling; output dims are max(floor(d/2), 1).

    Odd trailing slices are dropped; a size-1 axis pools over itself.
    Ties route the gradient to the first maximum in window (z, y, x)
    order, which keeps backward deterministic.  With `locked` set, forward
    reuses the last argmax selection (see ReLU.locked).
    """

    locked = False

    def forward(self, x: np.ndarray, mode: str = "eval") -> np.ndarray:
        b, c, d, h, w = x.shape
        od, oh, ow = max(d // 2, 1), max(h // 2, 1), max(w // 2, 1)
        td, th, tw = 2 * od, 2 * oh, 2 * ow
        xp = x[..., : min(d, td), : min(h, th), : min(w, tw)]
        if xp.shape[2:] != (td, th, tw):
            pad = [(0, 0), (0, 0)] + [
                (0, t - s) for t, s in zip((td, th, tw), xp.shape[2:])
            ]
            xp = np.pad(xp, pad, constant_values=-np.inf)
        win = (
            xp.reshape(b, c, od, 2, oh, 2, ow, 2)
            .transpose(0, 1, 2, 4, 6, 3, 5, 7)
            .reshape(b, c, od, oh, ow, 8)
        )
        if self.locked:
            idx = self._cache[0]
        else:
            idx = win.argmax(axis=-1)
        y = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
        self._cache = (idx, x.shape, (td, th, tw))
        return np.ascontiguousarray(y)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        idx, xshape, (td, th, tw) = self._cache
        b, c, d, h, w = xshape
        od, oh, ow = dy.shape[2:]
        scatter = np.zeros((b, c, od, oh, ow, 8), dtype=dy.dtype)
        np.put_along_axis(scatter, idx[..., None], dy[..., None], axis=-1)
        padded = (
            scatter.reshape(b, c, od, oh, ow, 2, 2, 2)
            .transpose(0, 1, 2, 5, 3, 6, 4, 7)
            .reshape(b, c, td, th, tw)
        )
        dx = np.zeros(xshape, dtype=dy.dtype)
        dx[..., : min(d, td), : min(h, th), : min(w, tw)] = padded[
            ..., : min(d, td), : min(h, th), : min(w, tw)
        ]
        return dx


def _adaptive_bins(n_in: int, n_out: int, dtype) -> np.ndarray:
    """(n_out, n_in) averaging matrix; bin i covers [i*n/o, ceil((i+1)*n/o))."""
    m = np.zeros((n_out, n_in), dtype=dtype)
    for i in range(n_out):
        s = (i * n_in) // n_out
        e = -((-(i + 1) * n_in) // n_out)
        m[i, s:e] = 1.0 / (e - s)
    return m


class AdaptiveAvgPool3d(Layer):
    """Average pooling to a fixed output size (used by skip connections
    and the global pool)."""

    def __init__(self, out_dims: tuple[int, int, int]):
        super().__init__()
        self.out_dims = out_dims

    def forward(self, x: np.ndarray, mode: str = "eval") -> np.ndarray:
        d, h, w = x.shape[2:]
        od, oh, ow = self.out_dims
        mz = _adaptive_bins(d, od, x.dtype)
        my = _adaptive_bins(h, oh, x.dtype)
        mx = _adaptive_bins(w, ow, x.dtype)
        y = np.einsum("id,jh,kw,bcdhw->bcijk", mz, my, mx, x, optimize=True)
        self._cache = (mz, my, mx, x.shape)
        return np.ascontiguousarray(y)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        mz, my, mx, xshape = self._cache
        dx = np.einsum("id,jh,kw,bcijk->bcdhw", mz, my, mx, dy, optimize=True)
        return np.ascontiguousarray(dx.astype(dy.dtype, copy=False))


class GlobalAvgPool(Layer):
    """Spatial mean: (B, C, D, H, W) -> (B, C)."""

    def forward(self, x: np.ndarray, mode: str = "eval") -> np.ndarray:
        self._shape = x.shape
        return x.mean(axis=(2, 3, 4))

    def backward(self, dy: np.ndarray) -> np.ndarray:
        b, c, d, h, w = self._shape
        scale = dy.dtype.type(1.0 / (d * h * w))
        return np.ascontiguousarray(
            np.broadcast_to((dy * scale)[:, :, None, None, None], self._shape)
        )


class Dense(Layer):
    def __init__(self, in_features: int, out_features: int, rng, dtype=np.float32):
        super().__init__()
        bound = 1.0 / np.sqrt(in_features)
        w = rng.uniform(-bound, bound, size=(out_features, in_features))
        self.weight = Param("weight", w.astype(dtype))
        self.bias = Param("bias", rng.uniform(-bound, bound, size=out_features).astype(dtype))
        self.params = [self.weight, self.bias]

    def forward(self, x: np.ndarray, mode: str = "eval") -> np.ndarray:
        self._x = x
        return x @ self.weight.value.T + self.bias.value

    def backward(self, dy: np.ndarray) -> np.ndarray:
        self.weight.grad += dy.T @ self._x
        self.bias.grad += dy.sum(axis=0)
        return dy @ self.weight.value


class Dropout(Layer):
    """Inverted dropout: train mode zeroes units with probability `rate`
    and scales survivors by 1/(1-rate); other modes are identity."""

    def __init__(self, rate: float = 0.5):
        super().__init__()
        if not (0 <= rate < 1):
            raise ShapeError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = None  # set by the model before training
        self._mask = None

    def forward(self, x: np.ndarray, mode: str = "eval") -> np.ndarray:
        if mode != "train" or self.rate == 0:
            self._mask = None
            return x
        if self.rng is None:
            raise ShapeError("dropout used in train mode without an RNG")
        keep = 1.0 - self.rate
        mask = (self.rng.random(x.shape) < keep).astype(x.dtype) / x.dtype.type(keep)
        self._mask = mask
        return x * mask

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._mask is None:
            return dy
        return dy * self._mask
