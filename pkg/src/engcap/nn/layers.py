"""Layers with explicit forward/backward passes on NHWC batches.

Each layer keeps what its backward pass needs from the last forward call,
so one instance serves one forward/backward at a time.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .._backend import kernels
from .arch import LayerSpec, conv_output_size, same_padding


class Layer:
    kind = ""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        # the first layer of a network has no use for its input gradient
        self.needs_input_grad = True

    def forward(self, x, training=False):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError


def _pads(h, w, kh, kw, stride, padding):
    if padding == "same":
        return same_padding(h, kh, stride), same_padding(w, kw, stride)
    return (0, 0), (0, 0)


def _pad(x, ph, pw, value=0.0):
    if ph == (0, 0) and pw == (0, 0):
        return x
    return np.pad(x, ((0, 0), ph, pw, (0, 0)), constant_values=value)


def _windows(xp, kh, kw, stride, ho, wo):
    """View of shape (B, ho, wo, C, kh, kw)."""
    v = sliding_window_view(xp, (kh, kw), axis=(1, 2))
    return v[:, : stride * (ho - 1) + 1 : stride, : stride * (wo - 1) + 1 : stride]


def _he_uniform(rng, shape, fan_in, dtype):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Conv2D(Layer):
    """Standard convolution, kernel layout (kh, kw, c_in, c_out), via im2col."""

    kind = "conv"

    def __init__(self, c_in, filters, kernel, stride=1, padding="same", rng=None, dtype=np.float64):
        super().__init__()
        kh, kw = kernel
        self.kernel, self.stride, self.padding = (kh, kw), stride, padding
        rng = rng or np.random.default_rng(0)
        self.params["w"] = _he_uniform(rng, (kh, kw, c_in, filters), kh * kw * c_in, dtype)
        self.params["b"] = np.zeros(filters, dtype=dtype)

    def forward(self, x, training=False):
        b, h, w, c = x.shape
        kh, kw = self.kernel
        ho = conv_output_size(h, kh, self.stride, self.padding)
        wo = conv_output_size(w, kw, self.stride, self.padding)
        ph, pw = _pads(h, w, kh, kw, self.stride, self.padding)
        xp = _pad(x, ph, pw)
        cols = _windows(xp, kh, kw, self.stride, ho, wo).transpose(0, 1, 2, 4, 5, 3).reshape(b * ho * wo, kh * kw * c)
        wmat = self.params["w"].reshape(kh * kw * c, -1)
        out = cols @ wmat + self.params["b"]
        self._cache = (x.shape, xp.shape, ph, pw, cols, ho, wo)
        return out.reshape(b, ho, wo, -1)

    def backward(self, dout):
        x_shape, xp_shape, ph, pw, cols, ho, wo = self._cache
        b, h, w, c = x_shape
        kh, kw = self.kernel
        s = self.stride
        d2 = dout.reshape(-1, dout.shape[-1])
        wmat = self.params["w"].reshape(kh * kw * c, -1)
        self.grads["w"] = (cols.T @ d2).reshape(self.params["w"].shape)
        self.grads["b"] = d2.sum(axis=0)
        if not self.needs_input_grad:
            return None
        dcols = (d2 @ wmat.T).reshape(b, ho, wo, kh, kw, c)
        dxp = np.zeros(xp_shape, dtype=dout.dtype)
        for i in range(kh):
            for j in range(kw):
                dxp[:, i : i + s * (ho - 1) + 1 : s, j : j + s * (wo - 1) + 1 : s, :] += dcols[:, :, :, i, j, :]
        return dxp[:, ph[0] : ph[0] + h, pw[0] : pw[0] + w, :]


class DepthwiseConv2D(Layer):
    """One kh x kw filter per channel, kernel layout (kh, kw, C)."""

    kind = "depthwise"

    def __init__(self, channels, kernel, stride=1, padding="same", rng=None, dtype=np.float64):
        super().__init__()
        kh, kw = kernel
        self.kernel, self.stride, self.padding = (kh, kw), stride, padding
        rng = rng or np.random.default_rng(0)
        self.params["w"] = _he_uniform(rng, (kh, kw, channels), kh * kw, dtype)
        self.params["b"] = np.zeros(channels, dtype=dtype)

    def forward(self, x, training=False):
        _, h, w, _ = x.shape
        kh, kw = self.kernel
        ho = conv_output_size(h, kh, self.stride, self.padding)
        wo = conv_output_size(w, kw, self.stride, self.padding)
        ph, pw = _pads(h, w, kh, kw, self.stride, self.padding)
        xp = np.ascontiguousarray(_pad(x, ph, pw))
        wk = np.ascontiguousarray(self.params["w"], dtype=xp.dtype)
        out = kernels.depthwise_forward(xp, wk, ho, wo, self.stride)
        self._cache = (x.shape, xp, ph, pw)
        return out + self.params["b"]

    def backward(self, dout):
        x_shape, xp, ph, pw = self._cache
        _, h, w, _ = x_shape
        wk = np.ascontiguousarray(self.params["w"], dtype=xp.dtype)
        dxp, dw = kernels.depthwise_backward(xp, wk, np.ascontiguousarray(dout, dtype=xp.dtype), self.stride)
        self.grads["w"] = dw
        self.grads["b"] = dout.sum(axis=(0, 1, 2))
        return dxp[:, ph[0] : ph[0] + h, pw[0] : pw[0] + w, :]


class PointwiseConv2D(Layer):
    kind = "pointwise"

    def __init__(self, c_in, filters, rng=None, dtype=np.float64):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.params["w"] = _he_uniform(rng, (c_in, filters), c_in, dtype)
        self.params["b"] = np.zeros(filters, dtype=dtype)

    def forward(self, x, training=False):
        self._x = x
        return x @ self.params["w"] + self.params["b"]

    def backward(self, dout):
        c_in = self._x.shape[-1]
        d2 = dout.reshape(-1, dout.shape[-1])
        self.grads["w"] = self._x.reshape(-1, c_in).T @ d2
        self.grads["b"] = d2.sum(axis=0)
        return dout @ self.params["w"].T


class BatchNorm(Layer):
    """Per-channel batch normalisation over every axis but the last.

    The moving statistics are exponential averages with bias correction:
    the raw averages start at zero and are divided by ``1 - momentum**t``,
    so with momentum 0.99 they track the data after a few dozen updates
    instead of staying near the (0, 1) initial values for hundreds.
    """

    kind = "batchnorm"

    def __init__(self, channels, momentum=0.99, epsilon=1e-3, dtype=np.float64):
        super().__init__()
        if epsilon <= 0:
            raise ValueError("batch-norm epsilon must be > 0")
        self.momentum, self.epsilon = momentum, epsilon
        self.params["gamma"] = np.ones(channels, dtype=dtype)
        self.params["beta"] = np.zeros(channels, dtype=dtype)
        self.buffers["moving_mean"] = np.zeros(channels, dtype=dtype)
        self.buffers["moving_var"] = np.ones(channels, dtype=dtype)
        self._raw_mean = np.zeros(channels)
        self._raw_var = np.zeros(channels)
        self._updates = 0
        # moving statistics are left untouched while True (finite-difference checks)
        self.frozen_stats = False

    def forward(self, x, training=False):
        axes = tuple(range(x.ndim - 1))
        if training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            if not self.frozen_stats:
                m = self.momentum
                self._updates += 1
                self._raw_mean = m * self._raw_mean + (1 - m) * mean
                self._raw_var = m * self._raw_var + (1 - m) * var
                correction = 1.0 - m**self._updates
                self.buffers["moving_mean"] = (self._raw_mean / correction).astype(x.dtype)
                self.buffers["moving_var"] = (self._raw_var / correction).astype(x.dtype)
        else:
            mean, var = self.buffers["moving_mean"], self.buffers["moving_var"]
        inv_std = (1.0 / np.sqrt(var + self.epsilon)).astype(x.dtype)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, axes, training)
        return self.params["gamma"] * xhat + self.params["beta"]

    def backward(self, dout):
        xhat, inv_std, axes, training = self._cache
        n = xhat.size // xhat.shape[-1]
        g_beta = dout.sum(axis=axes)
        g_gamma = (dout * xhat).sum(axis=axes)
        self.grads["gamma"], self.grads["beta"] = g_gamma, g_beta
        scale = self.params["gamma"] * inv_std
        if not training:
            # fixed statistics: a per-channel affine map
            return scale * dout
        return scale * (dout - g_beta / n - xhat * (g_gamma / n))


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, training=False):
        self._mask = x > 0
        return np.maximum(x, 0)

    def backward(self, dout):
        return dout * self._mask


class MaxPool2D(Layer):
    """k x k max-pool; ties go to the first element in row-major window order."""

    kind = "maxpool"

    def __init__(self, kernel=(2, 2), stride=2, padding="valid"):
        super().__init__()
        self.kernel, self.stride, self.padding = tuple(kernel), stride, padding

    def _slot(self, i, j, ho, wo):
        s = self.stride
        return (slice(None), slice(i, i + s * (ho - 1) + 1, s), slice(j, j + s * (wo - 1) + 1, s), slice(None))

    def forward(self, x, training=False):
        _, h, w, _ = x.shape
        kh, kw = self.kernel
        ho = conv_output_size(h, kh, self.stride, self.padding)
        wo = conv_output_size(w, kw, self.stride, self.padding)
        ph, pw = _pads(h, w, kh, kw, self.stride, self.padding)
        xp = _pad(x, ph, pw, value=-np.inf)
        out = xp[self._slot(0, 0, ho, wo)].copy()
        arg = np.zeros(out.shape, dtype=np.int8)
        for k in range(1, kh * kw):
            cand = xp[self._slot(k // kw, k % kw, ho, wo)]
            better = cand > out
            np.copyto(out, cand, where=better)
            arg[better] = k
        self._cache = (x.shape, xp.shape, ph, pw, arg, ho, wo)
        return out

    def backward(self, dout):
        x_shape, xp_shape, ph, pw, arg, ho, wo = self._cache
        _, h, w, _ = x_shape
        kh, kw = self.kernel
        dxp = np.zeros(xp_shape, dtype=dout.dtype)
        for k in range(kh * kw):
            dxp[self._slot(k // kw, k % kw, ho, wo)] += dout * (arg == k)
        return dxp[:, ph[0] : ph[0] + h, pw[0] : pw[0] + w, :]


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, training=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)


class GlobalAvgPool(Layer):
    kind = "gap"

    def forward(self, x, training=False):
        self._shape = x.shape
        return x.mean(axis=(1, 2))

    def backward(self, dout):
        b, h, w, c = self._shape
        return np.broadcast_to(dout[:, None, None, :] / (h * w), self._shape).copy()


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in, units, rng=None, dtype=np.float64):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.params["w"] = _he_uniform(rng, (n_in, units), n_in, dtype)
        self.params["b"] = np.zeros(units, dtype=dtype)

    def forward(self, x, training=False):
        self._x = x
        return x @ self.params["w"] + self.params["b"]

    def backward(self, dout):
        self.grads["w"] = self._x.T @ dout
        self.grads["b"] = dout.sum(axis=0)
        return dout @ self.params["w"].T


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class Softmax(Layer):
    kind = "softmax"

    def forward(self, x, training=False):
        self._p = softmax(x)
        return self._p

    def backward(self, dout):
        p = self._p
        return p * (dout - (dout * p).sum(axis=-1, keepdims=True))


def make_layer(spec: LayerSpec, in_shape, rng, dtype):
    k = spec.kind
    if k == "conv":
        return Conv2D(in_shape[2], spec.filters, spec.kernel, spec.stride, spec.padding, rng, dtype)
    if k == "depthwise":
        return DepthwiseConv2D(in_shape[2], spec.kernel, spec.stride, spec.padding, rng, dtype)
    if k == "pointwise":
        return PointwiseConv2D(in_shape[2], spec.filters, rng, dtype)
    if k == "batchnorm":
        return BatchNorm(in_shape[-1], dtype=dtype)
    if k == "relu":
        return ReLU()
    if k == "maxpool":
        return MaxPool2D(spec.kernel, spec.stride, spec.padding)
    if k == "flatten":
        return Flatten()
    if k == "gap":
        return GlobalAvgPool()
    if k == "dense":
        return Dense(in_shape[0], spec.units, rng, dtype)
    if k == "softmax":
        return Softmax()
    raise ValueError(k)
