"""Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-7)."""

from __future__ import annotations

import numpy as np


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-7):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {}
        self._v = {}

    def step(self, params, grads):
        """Update parameter arrays in place from matching (name, array) lists."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for (name, p), (gname, g) in zip(params, grads):
            if name != gname:
                raise ValueError(f"parameter/gradient order mismatch: {name} vs {gname}")
            if p.shape != g.shape:
                raise ValueError(f"{name}: parameter shape {p.shape} != gradient shape {g.shape}")
            m = self._m.get(name)
            if m is None:
                m = self._m[name] = np.zeros_like(p)
                self._v[name] = np.zeros_like(p)
            v = self._v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * np.square(g)
            p -= (self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)).astype(p.dtype)


def adam_update(param, grad, state=None, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-7):
    """Functional single-array Adam step; returns (new_param, new_state)."""
    if state is None:
        state = (np.zeros_like(param), np.zeros_like(param), 0)
    m, v, t = state
    t += 1
    m = beta1 * m + (1 - beta1) * grad
    v = beta2 * v + (1 - beta2) * np.square(grad)
    mhat = m / (1 - beta1**t)
    vhat = v / (1 - beta2**t)
    return param - lr * mhat / (np.sqrt(vhat) + eps), (m, v, t)
