"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, lr=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8) -> dict:
    """One Adam update of every tensor in ``params``; returns the new tensors.

    ``state`` holds the first/second moments and the step counter, which is
    advanced before the update so bias correction starts at t = 1.
    """
    state.t += 1
    t = state.t
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    out = {}
    for key, p in params.items():
        g = grads[key]
        m = state.m.get(key)
        v = state.v.get(key)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        state.m[key], state.v[key] = m, v
        step = lr * (m / c1) / (np.sqrt(v / c2) + epsilon)
        out[key] = (p - step).astype(p.dtype, copy=False)
    return out


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.lr, self.beta1, self.beta2, self.epsilon = lr, beta1, beta2, epsilon
        self.state = AdamState()

    def step(self, network):
        new = adam_step(network.params(), network.grads(), self.state, self.lr, self.beta1, self.beta2, self.epsilon)
        for key, value in new.items():
            network.set_param(key, value)
