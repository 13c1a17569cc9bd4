"""Differentiable layers over NHWC float tensors.

Every layer caches what its backward pass needs during forward, exposes
trainable arrays in ``params`` (updated in place by the optimizer) and
persistent non-trainable arrays in ``state``, and returns the gradient with
respect to its input from ``backward`` so input attributions can flow all
the way back to the image.

Spatial ops use TensorFlow-style 'same' padding: output side = ceil(n / s),
with the extra padding cell placed at the bottom/right edge.
"""

from __future__ import annotations

import math

import numpy as np


def same_pad(n: int, k: int, s: int) -> tuple:
    """(out_size, pad_before, pad_after) for 'same' padding."""
    out = -(-n // s)
    total = max((out - 1) * s + k - n, 0)
    return out, total // 2, total - total // 2


def he_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    limit = math.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Conv2D:
    """Full convolution, 'same' padding, configurable stride."""

    def __init__(self, kh, kw, cin, cout, stride=1, bias=True, rng=None, dtype=np.float32):
        rng = rng or np.random.default_rng(0)
        self.kh, self.kw, self.cin, self.cout, self.stride = kh, kw, cin, cout, stride
        self.params = {"w": he_uniform(rng, (kh, kw, cin, cout), kh * kw * cin, dtype)}
        if bias:
            self.params["b"] = np.zeros(cout, dtype=dtype)
        self.state = {}
        self.grads = {}
        self._cache = None

    def forward(self, x, train=False, rng=None):
        if x.shape[3] != self.cin:
            raise ValueError(f"conv expects {self.cin} input channels, got {x.shape[3]}")
        n, h, w, _ = x.shape
        s = self.stride
        oh, pt, pb = same_pad(h, self.kh, s)
        ow, pl, pr = same_pad(w, self.kw, s)
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
        y = np.zeros((n, oh, ow, self.cout), dtype=x.dtype)
        wk = self.params["w"]
        for i in range(self.kh):
            for j in range(self.kw):
                patch = xp[:, i : i + s * (oh - 1) + 1 : s, j : j + s * (ow - 1) + 1 : s, :]
                y += np.tensordot(patch, wk[i, j], axes=([3], [0]))
        if "b" in self.params:
            y += self.params["b"]
        self._cache = (xp, x.shape, (pt, pl), (oh, ow))
        return y

    def backward(self, dy):
        xp, x_shape, (pt, pl), (oh, ow) = self._cache
        s = self.stride
        wk = self.params["w"]
        dw = np.zeros_like(wk)
        dxp = np.zeros_like(xp)
        for i in range(self.kh):
            for j in range(self.kw):
                patch = xp[:, i : i + s * (oh - 1) + 1 : s, j : j + s * (ow - 1) + 1 : s, :]
                dw[i, j] = np.tensordot(patch, dy, axes=([0, 1, 2], [0, 1, 2]))
                dxp[:, i : i + s * (oh - 1) + 1 : s, j : j + s * (ow - 1) + 1 : s, :] += np.tensordot(
                    dy, wk[i, j], axes=([3], [1])
                )
        self.grads = {"w": dw}
        if "b" in self.params:
            self.grads["b"] = dy.sum(axis=(0, 1, 2))
        _, h, w, _ = x_shape
        return dxp[:, pt : pt + h, pl : pl + w, :]


class SepConv2D:
    """Depthwise spatial convolution followed by 1x1 pointwise mixing.

    Stride 1, 'same' padding, odd kernels. Parameters: kh*kw*cin + cin*cout
    versus kh*kw*cin*cout for the full convolution it replaces. No bias by
    default since a batch-norm usually follows.
    """

    def __init__(self, kh, kw, cin, cout, bias=False, rng=None, dtype=np.float32):
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValueError("separable convolution requires odd kernel sizes")
        rng = rng or np.random.default_rng(0)
        self.kh, self.kw, self.cin, self.cout = kh, kw, cin, cout
        self.params = {
            "dw": he_uniform(rng, (kh, kw, cin), kh * kw, dtype),
            "pw": he_uniform(rng, (cin, cout), cin, dtype),
        }
        if bias:
            self.params["b"] = np.zeros(cout, dtype=dtype)
        self.state = {}
        self.grads = {}
        self._cache = None

    def forward(self, x, train=False, rng=None):
        if x.shape[3] != self.cin:
            raise ValueError(f"sepconv expects {self.cin} input channels, got {x.shape[3]}")
        n, h, w, _ = x.shape
        _, pt, pb = same_pad(h, self.kh, 1)
        _, pl, pr = same_pad(w, self.kw, 1)
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
        dwk = self.params["dw"]
        mid = np.zeros_like(x)
        for i in range(self.kh):
            for j in range(self.kw):
                mid += xp[:, i : i + h, j : j + w, :] * dwk[i, j]
        y = np.tensordot(mid, self.params["pw"], axes=([3], [0]))
        if "b" in self.params:
            y += self.params["b"]
        self._cache = (xp, mid, (pt, pl), x.shape)
        return y

    def backward(self, dy):
        xp, mid, (pt, pl), x_shape = self._cache
        n, h, w, _ = x_shape
        dpw = np.tensordot(mid, dy, axes=([0, 1, 2], [0, 1, 2]))
        dmid = np.tensordot(dy, self.params["pw"], axes=([3], [1]))
        dwk = self.params["dw"]
        ddw = np.zeros_like(dwk)
        dxp = np.zeros_like(xp)
        for i in range(self.kh):
            for j in range(self.kw):
                ddw[i, j] = np.einsum("nhwc,nhwc->c", xp[:, i : i + h, j : j + w, :], dmid)
                dxp[:, i : i + h, j : j + w, :] += dmid * dwk[i, j]
        self.grads = {"dw": ddw, "pw": dpw}
        if "b" in self.params:
            self.grads["b"] = dy.sum(axis=(0, 1, 2))
        return dxp[:, pt : pt + h, pl : pl + w, :]


class BatchNorm2D:
    """Per-channel batch normalization with running statistics.

    Train mode normalizes by batch statistics (biased variance) and blends
    the running statistics with momentum 0.99; inference normalizes by the
    running statistics. eps = 1e-3.
    """

    EPS = 1e-3
    MOMENTUM = 0.99

    def __init__(self, channels, dtype=np.float32):
        self.channels = channels
        self.params = {"gamma": np.ones(channels, dtype=dtype), "beta": np.zeros(channels, dtype=dtype)}
        self.state = {"running_mean": np.zeros(channels, dtype=dtype), "running_var": np.ones(channels, dtype=dtype)}
        self.grads = {}
        self._cache = None

    def forward(self, x, train=False, rng=None):
        if train:
            m = x.shape[0] * x.shape[1] * x.shape[2]
            if m < 2:
                raise ValueError("batch norm in train mode needs at least 2 values per channel")
            mean = x.mean(axis=(0, 1, 2))
            var = x.var(axis=(0, 1, 2))
            self.state["running_mean"] = (self.MOMENTUM * self.state["running_mean"] + (1 - self.MOMENTUM) * mean).astype(x.dtype)
            self.state["running_var"] = (self.MOMENTUM * self.state["running_var"] + (1 - self.MOMENTUM) * var).astype(x.dtype)
        else:
            mean = self.state["running_mean"]
            var = self.state["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.EPS)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, train, x.shape)
        return self.params["gamma"] * xhat + self.params["beta"]

    def backward(self, dy):
        xhat, inv_std, train, shape = self._cache
        self.grads = {"gamma": (dy * xhat).sum(axis=(0, 1, 2)), "beta": dy.sum(axis=(0, 1, 2))}
        g = self.params["gamma"]
        if not train:
            return dy * g * inv_std
        m = shape[0] * shape[1] * shape[2]
        dxhat = dy * g
        # standard train-mode backward including the mean/var paths
        return (inv_std / m) * (m * dxhat - dxhat.sum(axis=(0, 1, 2)) - xhat * (dxhat * xhat).sum(axis=(0, 1, 2)))


class ReLU:
    def __init__(self):
        self.params = {}
        self.state = {}
        self.grads = {}
        self._mask = None

    def forward(self, x, train=False, rng=None):
        self._mask = x > 0
        return np.where(self._mask, x, x.dtype.type(0))

    def backward(self, dy):
        return dy * self._mask


class MaxPool2D:
    """k x k max pooling, 'same' padding. Backward routes the gradient to the
    first (row-major within the window) maximum."""

    def __init__(self, k=3, stride=2):
        self.k, self.stride = k, stride
        self.params = {}
        self.state = {}
        self.grads = {}
        self._cache = None

    def forward(self, x, train=False, rng=None):
        n, h, w, c = x.shape
        s = self.stride
        oh, pt, pb = same_pad(h, self.k, s)
        ow, pl, pr = same_pad(w, self.k, s)
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)), constant_values=-np.inf)
        windows = np.stack(
            [
                xp[:, i : i + s * (oh - 1) + 1 : s, j : j + s * (ow - 1) + 1 : s, :]
                for i in range(self.k)
                for j in range(self.k)
            ],
            axis=-1,
        )
        idx = windows.argmax(axis=-1)
        y = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
        self._cache = (idx, xp.shape, (pt, pl), x.shape, (oh, ow))
        return y

    def backward(self, dy):
        idx, xp_shape, (pt, pl), x_shape, (oh, ow) = self._cache
        s = self.stride
        dxp = np.zeros(xp_shape, dtype=dy.dtype)
        flat = 0
        for i in range(self.k):
            for j in range(self.k):
                sel = idx == flat
                dxp[:, i : i + s * (oh - 1) + 1 : s, j : j + s * (ow - 1) + 1 : s, :] += dy * sel
                flat += 1
        _, h, w, _ = x_shape
        return dxp[:, pt : pt + h, pl : pl + w, :]


class GlobalAvgPool:
    def __init__(self):
        self.params = {}
        self.state = {}
        self.grads = {}
        self._shape = None

    def forward(self, x, train=False, rng=None):
        self._shape = x.shape
        return x.mean(axis=(1, 2))

    def backward(self, dy):
        n, h, w, c = self._shape
        return np.broadcast_to(dy[:, None, None, :] / (h * w), self._shape).astype(dy.dtype)


class Dropout:
    """Inverted dropout: activations scale by 1/(1-rate) at train time so
    inference applies no correction."""

    def __init__(self, rate):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.params = {}
        self.state = {}
        self.grads = {}
        self._mask = None

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ValueError("dropout in train mode needs an rng")
        self._mask = (rng.random(x.shape) >= self.rate).astype(x.dtype) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, dy):
        return dy if self._mask is None else dy * self._mask


class Dense:
    def __init__(self, fin, fout, rng=None, dtype=np.float32):
        rng = rng or np.random.default_rng(0)
        self.fin, self.fout = fin, fout
        self.params = {"w": he_uniform(rng, (fin, fout), fin, dtype), "b": np.zeros(fout, dtype=dtype)}
        self.state = {}
        self.grads = {}
        self._x = None

    def forward(self, x, train=False, rng=None):
        if x.shape[1] != self.fin:
            raise ValueError(f"dense expects {self.fin} features, got {x.shape[1]}")
        self._x = x
        return x @ self.params["w"] + self.params["b"]

    def backward(self, dy):
        self.grads = {"w": self._x.T @ dy, "b": dy.sum(axis=0)}
        return dy @ self.params["w"].T
