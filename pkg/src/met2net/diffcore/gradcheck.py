"""Central finite-difference gradient checks."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, backward


def numerical_grad(fn, arrays: list[np.ndarray], h: float = 1e-5) -> list[np.ndarray]:
    """d fn / d array for each array, by central differences. ``fn`` returns a float."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            fp = fn()
            flat[i] = old - h
            fm = fn()
            flat[i] = old
            gflat[i] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    num = np.linalg.norm((a - b).ravel())
    den = max(np.linalg.norm(a.ravel()), np.linalg.norm(b.ravel()), 1e-12)
    return float(num / den)


def check_gradients(build, leaves: list[Tensor], h: float = 1e-5, seed: int = 9173) -> float:
    """Largest relative error between analytic and numeric gradients.

    ``build`` maps the leaves to an output tensor; it is reduced to a scalar
    by a fixed random projection so every output element contributes.
    """
    rng = np.random.default_rng(seed)
    out = build()
    proj = rng.standard_normal(out.shape).astype(out.dtype)

    def loss_value():
        return float(np.sum(build().data * proj))

    for leaf in leaves:
        leaf.grad = None if not hasattr(leaf, "trainable") else np.zeros_like(leaf.data)
    loss = (build() * Tensor(proj)).sum()
    backward(loss)
    analytic = [np.array(leaf.grad) for leaf in leaves]
    numeric = numerical_grad(loss_value, [leaf.data for leaf in leaves], h)
    return max(relative_error(a, n) for a, n in zip(analytic, numeric))
