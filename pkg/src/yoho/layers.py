"""Numpy layers with explicit backward passes.

Activations are NHWC (batch, time, freq, channel). Every layer caches what
its backward pass needs during ``forward`` and accumulates parameter
gradients into ``self.grads`` on ``backward``.
"""

from __future__ import annotations

import math

import numpy as np


def same_padding(size: int, kernel: int, stride: int) -> tuple[int, int, int]:
    """Output size and (before, after) padding for "same" convolution."""
    out = math.ceil(size / stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return out, total // 2, total - total // 2


class Layer:
    kind = "layer"

    def __init__(self, name: str):
        self.name = name
        self.params: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray, train: bool, rng=None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def zero_grad(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def output_shape(self, shape: tuple) -> tuple:
        return shape


class _Spatial(Layer):
    """Shared sliding-window bookkeeping for 2-D convolutions."""

    def __init__(self, name, kernel, stride):
        super().__init__(name)
        self.kernel = kernel
        self.stride = stride

    def _geometry(self, shape):
        _, h, w, _ = shape
        ho, ph0, ph1 = same_padding(h, self.kernel[0], self.stride[0])
        wo, pw0, pw1 = same_padding(w, self.kernel[1], self.stride[1])
        return ho, wo, ((0, 0), (ph0, ph1), (pw0, pw1), (0, 0))

    def _taps(self, ho, wo):
        sh, sw = self.stride
        for i in range(self.kernel[0]):
            for j in range(self.kernel[1]):
                yield i, j, (slice(None), slice(i, i + sh * (ho - 1) + 1, sh), slice(j, j + sw * (wo - 1) + 1, sw))

    def output_shape(self, shape):
        ho, wo, _ = self._geometry((1,) + tuple(shape))
        return (ho, wo, self.out_channels)


class Conv2D(_Spatial):
    kind = "conv2d"

    def __init__(self, name, in_channels, filters, kernel=(1, 1), stride=(1, 1), rng=None, dtype=np.float32):
        super().__init__(name, kernel, stride)
        self.out_channels = filters
        fan_in = kernel[0] * kernel[1] * in_channels
        rng = rng or np.random.default_rng(0)
        self.params["kernel"] = (rng.standard_normal((*kernel, in_channels, filters)) * math.sqrt(2.0 / fan_in)).astype(dtype)

    def forward(self, x, train, rng=None):
        w = self.params["kernel"]
        if self.kernel == (1, 1) and self.stride == (1, 1):
            self._x = x
            return x @ w[0, 0]
        ho, wo, pads = self._geometry(x.shape)
        xp = np.pad(x, pads)
        out = np.zeros((x.shape[0], ho, wo, w.shape[-1]), dtype=x.dtype)
        for i, j, sl in self._taps(ho, wo):
            out += xp[sl] @ w[i, j]
        self._x, self._xp_shape, self._pads = xp, xp.shape, pads
        return out

    def backward(self, dout):
        w = self.params["kernel"]
        if self.kernel == (1, 1) and self.stride == (1, 1):
            cin = w.shape[2]
            self.grads["kernel"] += (self._x.reshape(-1, cin).T @ dout.reshape(-1, dout.shape[-1]))[None, None]
            return dout @ w[0, 0].T
        xp = self._x
        ho, wo = dout.shape[1:3]
        cin = w.shape[2]
        flat_dout = dout.reshape(-1, dout.shape[-1])
        dxp = np.zeros(self._xp_shape, dtype=dout.dtype)
        for i, j, sl in self._taps(ho, wo):
            self.grads["kernel"][i, j] += xp[sl].reshape(-1, cin).T @ flat_dout
            dxp[sl] += dout @ w[i, j].T
        (_, _), (h0, h1), (w0, w1), _ = self._pads
        return dxp[:, h0:dxp.shape[1] - h1, w0:dxp.shape[2] - w1, :]


class DepthwiseConv2D(_Spatial):
    kind = "conv2d_depthwise"

    def __init__(self, name, channels, kernel=(3, 3), stride=(1, 1), rng=None, dtype=np.float32):
        super().__init__(name, kernel, stride)
        self.out_channels = channels
        rng = rng or np.random.default_rng(0)
        fan_in = kernel[0] * kernel[1]
        self.params["kernel"] = (rng.standard_normal((*kernel, channels)) * math.sqrt(2.0 / fan_in)).astype(dtype)

    def forward(self, x, train, rng=None):
        w = self.params["kernel"]
        ho, wo, pads = self._geometry(x.shape)
        xp = np.pad(x, pads)
        out = np.zeros((x.shape[0], ho, wo, x.shape[-1]), dtype=x.dtype)
        for i, j, sl in self._taps(ho, wo):
            out += xp[sl] * w[i, j]
        self._x, self._pads = xp, pads
        return out

    def backward(self, dout):
        w = self.params["kernel"]
        xp = self._x
        ho, wo = dout.shape[1:3]
        dxp = np.zeros_like(xp)
        for i, j, sl in self._taps(ho, wo):
            self.grads["kernel"][i, j] += np.einsum("nhwc,nhwc->c", xp[sl], dout)
            dxp[sl] += dout * w[i, j]
        (_, _), (h0, h1), (w0, w1), _ = self._pads
        return dxp[:, h0:dxp.shape[1] - h1, w0:dxp.shape[2] - w1, :]


class BatchNorm(Layer):
    kind = "batchnorm"

    def __init__(self, name, channels, momentum=0.99, eps=1e-3, dtype=np.float32):
        super().__init__(name)
        self.momentum = momentum
        self.eps = eps
        self.params["gamma"] = np.ones(channels, dtype=dtype)
        self.params["beta"] = np.zeros(channels, dtype=dtype)
        self.buffers["moving_mean"] = np.zeros(channels, dtype=dtype)
        self.buffers["moving_var"] = np.ones(channels, dtype=dtype)
        # set by calibrate(); momentum override for one pass
        self._momentum_override = None

    def forward(self, x, train, rng=None):
        gamma, beta = self.params["gamma"], self.params["beta"]
        axes = tuple(range(x.ndim - 1))
        if train:
            mean = x.mean(axis=axes)
            centered = x - mean
            var = (centered * centered).mean(axis=axes)
            inv_std = 1.0 / np.sqrt(var + self.eps)
            xhat = centered * inv_std
            m = self.momentum if self._momentum_override is None else self._momentum_override
            dtype = self.buffers["moving_mean"].dtype
            self.buffers["moving_mean"] = (m * self.buffers["moving_mean"] + (1 - m) * mean).astype(dtype)
            self.buffers["moving_var"] = (m * self.buffers["moving_var"] + (1 - m) * var).astype(dtype)
            self._cache = (xhat, inv_std, True)
        else:
            inv_std = 1.0 / np.sqrt(self.buffers["moving_var"] + self.eps)
            xhat = (x - self.buffers["moving_mean"]) * inv_std
            self._cache = (xhat, inv_std, False)
        return (gamma * xhat + beta).astype(x.dtype, copy=False)

    def backward(self, dout):
        xhat, inv_std, train = self._cache
        axes = tuple(range(dout.ndim - 1))
        self.grads["gamma"] += (dout * xhat).sum(axis=axes)
        self.grads["beta"] += dout.sum(axis=axes)
        dxhat = dout * self.params["gamma"]
        if not train:
            return dxhat * inv_std
        m = int(np.prod([dout.shape[a] for a in axes]))
        return (inv_std / m) * (m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train, rng=None):
        self._mask = x > 0
        return np.where(self._mask, x, 0).astype(x.dtype, copy=False)

    def backward(self, dout):
        return np.where(self._mask, dout, 0).astype(dout.dtype, copy=False)


class SpatialDropout(Layer):
    """Zeroes whole channels per example; identity outside training."""

    kind = "spatial_dropout"

    def __init__(self, name, rate=0.1):
        super().__init__(name)
        self.rate = rate

    def forward(self, x, train, rng=None):
        if not train or self.rate <= 0 or rng is None:
            self._mask = None
            return x
        keep = rng.random((x.shape[0],) + (1,) * (x.ndim - 2) + (x.shape[-1],)) >= self.rate
        self._mask = (keep / (1.0 - self.rate)).astype(x.dtype)
        return x * self._mask

    def backward(self, dout):
        return dout if self._mask is None else dout * self._mask


class Flatten(Layer):
    """(N, T, F, C) -> (N, T, F*C), freq-major then channel."""

    kind = "reshape"

    def forward(self, x, train, rng=None):
        self._shape = x.shape
        return x.reshape(x.shape[0], x.shape[1], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)

    def output_shape(self, shape):
        return (shape[0], int(np.prod(shape[1:])))


class Conv1D(Layer):
    """Kernel-size-1 temporal convolution, i.e. a per-time-step dense map."""

    kind = "conv1d"

    def __init__(self, name, in_channels, filters, rng=None, dtype=np.float32):
        super().__init__(name)
        rng = rng or np.random.default_rng(0)
        self.out_channels = filters
        self.params["kernel"] = (rng.standard_normal((in_channels, filters)) * math.sqrt(2.0 / in_channels)).astype(dtype)
        self.params["bias"] = np.zeros(filters, dtype=dtype)

    def forward(self, x, train, rng=None):
        self._x = x
        return x @ self.params["kernel"] + self.params["bias"]

    def backward(self, dout):
        cin = self._x.shape[-1]
        self.grads["kernel"] += self._x.reshape(-1, cin).T @ dout.reshape(-1, dout.shape[-1])
        self.grads["bias"] += dout.reshape(-1, dout.shape[-1]).sum(axis=0)
        return dout @ self.params["kernel"].T

    def output_shape(self, shape):
        return (shape[0], self.out_channels)


class Sigmoid(Layer):
    kind = "sigmoid"

    def forward(self, x, train, rng=None):
        # split by sign to avoid overflow in exp
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        self._out = out
        return out

    def backward(self, dout):
        return dout * self._out * (1.0 - self._out)
