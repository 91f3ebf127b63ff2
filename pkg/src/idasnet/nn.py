"""Differentiable building blocks for the small CNNs in this package.

Everything is plain numpy with explicit forward/backward methods. Arrays use
the (batch, channels, height, width) layout. Layers own their parameters and
gradient buffers; ``param_items()`` exposes them to the optimizer and to the
parameter-count report. Training runs in float32 by default; constructing a
layer with ``dtype=np.float64`` gives the double-precision path used by the
gradient-check harness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import col2im_k3, im2col_k3


class ShapeError(ValueError):
    """Raised when tensor dimensions do not match a layer contract."""


@dataclass
class ParamItem:
    """A named parameter array with its gradient buffer.

    ``value`` and ``grad`` alias the layer's own arrays, so in-place updates
    through a ParamItem update the layer.
    """

    name: str
    value: np.ndarray
    grad: np.ndarray | None
    trainable: bool

    @property
    def size(self) -> int:
        return self.value.size


class Conv2d:
    """3x3 convolution, stride 1, zero padding 1 (spatial size preserved).

    Kernel and bias are initialized from a fan-in-scaled uniform
    distribution.
    """

    def __init__(self, in_ch, out_ch, rng=None, dtype=np.float32, trainable=True):
        if rng is None:
            rng = np.random.default_rng()
        bound = 1.0 / math.sqrt(in_ch * 9)
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.trainable = trainable
        self.weight = rng.uniform(-bound, bound, size=(out_ch, in_ch, 3, 3)).astype(dtype)
        self.bias = rng.uniform(-bound, bound, size=out_ch).astype(dtype)
        self.gweight = np.zeros_like(self.weight)
        self.gbias = np.zeros_like(self.bias)
        self._cols = None
        self._shape = None

    def forward(self, x, keep_cache=True):
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise ShapeError(
                f"conv expects (N, {self.in_ch}, H, W), got {x.shape}")
        n, c, h, w = x.shape
        if h < 1 or w < 1:
            raise ShapeError("empty spatial dims")
        cols = im2col_k3(x)
        wmat = self.weight.reshape(self.out_ch, c * 9)
        y = cols @ wmat.T
        y += self.bias
        y = np.ascontiguousarray(y.reshape(n, h, w, self.out_ch).transpose(0, 3, 1, 2))
        if keep_cache:
            self._cols = cols
            self._shape = (n, c, h, w)
        return y

    def backward(self, gy):
        if self._cols is None:
            raise RuntimeError("backward called before forward")
        n, c, h, w = self._shape
        gmat = np.ascontiguousarray(gy.transpose(0, 2, 3, 1)).reshape(n * h * w, self.out_ch)
        self.gweight += (gmat.T @ self._cols).reshape(self.weight.shape)
        self.gbias += gmat.sum(axis=0)
        gcols = gmat @ self.weight.reshape(self.out_ch, c * 9)
        self._cols = None
        return col2im_k3(gcols, n, c, h, w)

    def param_items(self, prefix=""):
        return [
            ParamItem(prefix + "weight", self.weight, self.gweight, self.trainable),
            ParamItem(prefix + "bias", self.bias, self.gbias, self.trainable),
        ]

    def zero_grads(self):
        self.gweight[...] = 0
        self.gbias[...] = 0


class BatchNorm2d:
    """Per-channel batch normalization with running statistics.

    Train mode normalizes by batch statistics and updates the running
    mean/variance with momentum; eval mode uses the running statistics.
    """

    def __init__(self, ch, eps=1e-5, momentum=0.1, dtype=np.float32):
        self.ch = ch
        self.eps = eps
        self.momentum = momentum
        self.gamma = np.ones(ch, dtype=dtype)
        self.beta = np.zeros(ch, dtype=dtype)
        self.running_mean = np.zeros(ch, dtype=dtype)
        self.running_var = np.ones(ch, dtype=dtype)
        self.ggamma = np.zeros_like(self.gamma)
        self.gbeta = np.zeros_like(self.beta)
        self._cache = None

    def forward(self, x, train):
        if x.ndim != 4 or x.shape[1] != self.ch:
            raise ShapeError(f"batchnorm expects (N, {self.ch}, H, W), got {x.shape}")
        if train:
            m = x.shape[0] * x.shape[2] * x.shape[3]
            if m <= 1:
                raise ShapeError("train-mode batchnorm needs more than one value per channel")
            mu = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            mom = self.momentum
            self.running_mean[...] = (1.0 - mom) * self.running_mean + mom * mu
            self.running_var[...] = (1.0 - mom) * self.running_var + mom * var
            inv = 1.0 / np.sqrt(var + self.eps)
            xc = x - mu[None, :, None, None]
            xhat = xc * inv[None, :, None, None]
            self._cache = ("train", xc, xhat, inv, m)
        else:
            inv = 1.0 / np.sqrt(self.running_var + self.eps)
            xhat = (x - self.running_mean[None, :, None, None]) * inv[None, :, None, None]
            self._cache = ("eval", inv)
        return self.gamma[None, :, None, None] * xhat + self.beta[None, :, None, None]

    def backward(self, gy):
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        if self._cache[0] == "eval":
            _, inv = self._cache
            return gy * (self.gamma * inv)[None, :, None, None]
        _, xc, xhat, inv, m = self._cache
        self.gbeta += gy.sum(axis=(0, 2, 3))
        self.ggamma += (gy * xhat).sum(axis=(0, 2, 3))
        gxhat = gy * self.gamma[None, :, None, None]
        invb = inv[None, :, None, None]
        gvar = (gxhat * xc).sum(axis=(0, 2, 3), keepdims=True) * (-0.5) * invb ** 3
        gmu = -(gxhat.sum(axis=(0, 2, 3), keepdims=True)) * invb \
            + gvar * (-2.0 / m) * xc.sum(axis=(0, 2, 3), keepdims=True)
        gx = gxhat * invb + gvar * (2.0 / m) * xc + gmu / m
        self._cache = None
        return gx

    def param_items(self, prefix=""):
        return [
            ParamItem(prefix + "gamma", self.gamma, self.ggamma, True),
            ParamItem(prefix + "beta", self.beta, self.gbeta, True),
            ParamItem(prefix + "running_mean", self.running_mean, None, False),
            ParamItem(prefix + "running_var", self.running_var, None, False),
        ]

    def zero_grads(self):
        self.ggamma[...] = 0
        self.gbeta[...] = 0


class LeakyReLU:
    """x for x >= 0, slope * x otherwise."""

    def __init__(self, slope=0.3):
        self.slope = slope
        self._dx = None

    def forward(self, x):
        pos = x >= 0
        self._dx = np.where(pos, x.dtype.type(1), x.dtype.type(self.slope))
        return np.where(pos, x, self.slope * x)

    def backward(self, gy):
        return gy * self._dx


class Sigmoid:
    """Logistic activation, numerically stable on both tails."""

    def __init__(self):
        self._y = None

    def forward(self, x):
        y = np.empty_like(x)
        pos = x >= 0
        y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        y[~pos] = ex / (1.0 + ex)
        self._y = y
        return y

    def backward(self, gy):
        y = self._y
        return gy * y * (1.0 - y)


def lrelu(x, slope=0.3):
    """Functional LeakyReLU."""
    x = np.asarray(x)
    return np.where(x >= 0, x, slope * x)


def sigmoid(x):
    """Functional logistic sigmoid."""
    return Sigmoid().forward(np.asarray(x, dtype=float))


def mse_loss(pred, target):
    """Mean over batch samples of the squared L2 norm of the difference.

    Returns ``(loss, grad_wrt_pred)``. The sum runs over all entries of a
    sample; the mean runs over the leading batch axis only.
    """
    if pred.shape != target.shape:
        raise ShapeError(f"loss shapes differ: {pred.shape} vs {target.shape}")
    batch = pred.shape[0]
    diff = pred - target
    loss = float((diff.astype(np.float64) ** 2).sum() / batch)
    return loss, diff * (2.0 / batch)


class Adam:
    """Adam with bias correction. State is keyed by parameter name."""

    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {}
        self.v = {}

    def step(self, items, lr):
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** t
        c2 = 1.0 - b2 ** t
        for it in items:
            if not it.trainable:
                continue
            g = it.grad
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient in {it.name}")
            m = self.m.get(it.name)
            if m is None:
                m = self.m[it.name] = np.zeros_like(it.value)
                self.v[it.name] = np.zeros_like(it.value)
            v = self.v[it.name]
            m[...] = b1 * m + (1.0 - b1) * g
            v[...] = b2 * v + (1.0 - b2) * (g * g)
            it.value -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass(frozen=True)
class LrSchedule:
    """Linear warmup to ``lr_max`` followed by a cosine decay to ``lr_min``."""

    lr_min: float
    lr_max: float
    warmup_epochs: int
    total_epochs: int

    def __post_init__(self):
        if not 0 <= self.lr_min <= self.lr_max:
            raise ValueError("need 0 <= lr_min <= lr_max")
        if not 0 < self.warmup_epochs < self.total_epochs:
            raise ValueError("need 0 < warmup_epochs < total_epochs")


def lr_at_epoch(sched, t):
    """Learning rate for 1-based epoch index ``t``.

    Ramps linearly from zero over the warmup epochs, then follows a half
    cosine from ``lr_max`` down to ``lr_min``. The warmup and final epochs
    return ``lr_max`` and ``lr_min`` exactly.
    """
    if not 1 <= t <= sched.total_epochs:
        raise ValueError(f"epoch {t} outside [1, {sched.total_epochs}]")
    if t <= sched.warmup_epochs:
        if t == sched.warmup_epochs:
            return sched.lr_max
        return sched.lr_max * t / sched.warmup_epochs
    if t == sched.total_epochs:
        return sched.lr_min
    frac = (t - sched.warmup_epochs) / (sched.total_epochs - sched.warmup_epochs)
    return sched.lr_min + 0.5 * (sched.lr_max - sched.lr_min) * (1.0 + math.cos(math.pi * frac))
