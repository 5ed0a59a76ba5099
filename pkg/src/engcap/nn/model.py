"""Sequential network built from an ArchitectureSpec, with a fused
softmax/cross-entropy loss and a serialisable state."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .arch import ArchitectureSpec, infer_shapes
from .layers import make_layer, softmax


class NumericalError(RuntimeError):
    """Raised when a loss or gradient stops being finite."""


@dataclass
class ModelState:
    """Everything needed to rebuild a trained network."""

    arch: ArchitectureSpec
    # one dict per layer: trainable tensors plus buffers (BN moving stats)
    weights: list
    norm_stats: dict = field(default_factory=dict)
    rng_seed: int = 0
    metadata: dict = field(default_factory=dict)

    def validate(self):
        net = Network(self.arch, seed=0)
        if len(self.weights) != len(net.layers):
            raise ValueError("weight list does not match the architecture")
        for i, (layer, w) in enumerate(zip(net.layers, self.weights)):
            expected = {**layer.params, **layer.buffers}
            if set(w) != set(expected):
                raise ValueError(f"layer {i}: tensors {sorted(w)} != {sorted(expected)}")
            for name, arr in w.items():
                if arr.shape != expected[name].shape:
                    raise ValueError(f"layer {i} {name}: shape {arr.shape} != {expected[name].shape}")
            if "moving_var" in w and np.any(w["moving_var"] <= 0):
                raise ValueError(f"layer {i}: non-positive moving variance")


class Network:
    def __init__(self, arch: ArchitectureSpec, seed: int = 0, dtype=np.float32):
        shapes = infer_shapes(arch)
        if arch.layers[-1].kind != "softmax":
            raise ValueError("the last layer must be softmax")
        self.arch = arch
        self.seed = seed
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self.layers = []
        in_shape = arch.input_shape
        for spec, out_shape in zip(arch.layers, shapes):
            self.layers.append(make_layer(spec, in_shape, rng, self.dtype))
            in_shape = out_shape
        self.layers[0].needs_input_grad = False
        self.n_classes = shapes[-1][0]

    # parameter access -------------------------------------------------
    def param_keys(self):
        return [(i, name) for i, layer in enumerate(self.layers) for name in layer.params]

    def params(self) -> dict:
        return {(i, n): self.layers[i].params[n] for i, n in self.param_keys()}

    def grads(self) -> dict:
        return {(i, n): self.layers[i].grads[n] for i, n in self.param_keys()}

    def set_param(self, key, value):
        i, n = key
        self.layers[i].params[n] = value

    def get_weights(self) -> list:
        return [{k: v.copy() for k, v in {**l.params, **l.buffers}.items()} for l in self.layers]

    def set_weights(self, weights):
        for layer, w in zip(self.layers, weights):
            for k, v in w.items():
                target = layer.params if k in layer.params else layer.buffers
                target[k] = np.array(v, dtype=self.dtype, copy=True)

    def state(self, norm_stats=None, metadata=None) -> ModelState:
        return ModelState(self.arch, self.get_weights(), dict(norm_stats or {}), self.seed, dict(metadata or {}))

    @classmethod
    def from_state(cls, state: ModelState, dtype=np.float32) -> "Network":
        net = cls(state.arch, seed=state.rng_seed, dtype=dtype)
        net.set_weights(state.weights)
        return net

    # passes -----------------------------------------------------------
    def _as_input(self, x):
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == len(self.arch.input_shape):
            x = x[None]
        if x.shape[1:] != self.arch.input_shape:
            raise ValueError(f"input shape {x.shape[1:]} != {self.arch.input_shape}")
        return x

    def logits(self, x, training=False):
        x = self._as_input(x)
        for layer in self.layers[:-1]:
            x = layer.forward(x, training)
        return x

    def forward(self, x, training=False):
        return softmax(self.logits(x, training))

    def predict_proba(self, x, batch_size=128):
        x = np.asarray(x)
        out = [self.forward(x[i : i + batch_size]) for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.zeros((0, self.n_classes), dtype=self.dtype)

    def predict(self, x, batch_size=128):
        return self.predict_proba(x, batch_size).argmax(axis=1)

    def loss(self, x, y, training=False) -> float:
        p = self.forward(x, training)
        return cross_entropy(p, np.asarray(y))

    def loss_and_grads(self, x, y, training=True) -> float:
        """Mean cross-entropy over the batch; fills every layer's ``grads``."""
        y = np.asarray(y)
        z = self.logits(x, training)
        p = softmax(z)
        loss = cross_entropy(p, y)
        if not np.isfinite(loss):
            raise NumericalError("non-finite loss")
        d = p.copy()
        d[np.arange(len(y)), y] -= 1.0
        d /= len(y)
        for i in range(len(self.layers) - 2, -1, -1):
            layer = self.layers[i]
            d = layer.backward(d)
            for name, g in layer.grads.items():
                if not np.all(np.isfinite(g)):
                    raise NumericalError(f"non-finite gradient for {name!r} in layer {i} ({layer.kind})")
        return loss


def cross_entropy(p, y) -> float:
    """``-mean(log p[y])`` with labels given as class indices."""
    picked = p[np.arange(len(y)), y].astype(np.float64)
    return float(-np.mean(np.log(np.maximum(picked, 1e-300))))
