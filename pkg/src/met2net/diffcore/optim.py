"""Adam with bias correction and lazily allocated moments."""

from __future__ import annotations

import numpy as np

from .tensor import Parameter


class Adam:
    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params: list[Parameter] = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self):
        self.t += 1
        adam_step(self.params, self.lr, self.beta1, self.beta2, self.eps, self.t, self.m, self.v)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for path, arr in self.m.items():
            out[f"adam.m.{path}"] = arr
        for path, arr in self.v.items():
            out[f"adam.v.{path}"] = arr
        return out


def adam_step(params, lr: float, beta1: float, beta2: float, eps: float, t: int,
              m: dict | None = None, v: dict | None = None) -> None:
    """One bias-corrected Adam update over the trainable members of ``params``.

    Moments are keyed by parameter path and created on first use. Gradients
    of every parameter are zeroed afterwards.
    """
    if t < 1:
        raise ValueError(f"Adam step index must be >= 1, got {t}")
    m = {} if m is None else m
    v = {} if v is None else v
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for p in params:
        if not p.trainable:
            p.zero_grad()
            continue
        key = p.path or str(id(p))
        g = p.grad
        if key not in m:
            m[key] = np.zeros_like(p.data)
            v[key] = np.zeros_like(p.data)
        m[key] = beta1 * m[key] + (1.0 - beta1) * g
        v[key] = beta2 * v[key] + (1.0 - beta2) * (g * g)
        mhat = m[key] / c1
        vhat = v[key] / c2
        p.data = (p.data - lr * mhat / (np.sqrt(vhat) + eps)).astype(p.data.dtype, copy=False)
        p.zero_grad()
