from __future__ import annotations

import numpy as np


def _relative_path(path: str) -> str:
    return path[len("shadow."):] if path.startswith("shadow.") else path


def momentum_update(shadow, primary, alpha: float) -> None:
    """theta_m <- alpha * theta_m + (1 - alpha) * theta, elementwise.

    The blend runs in float64 on the stored value plus the rounding residual
    kept from the previous update, so a float32 shadow tracks the closed-form
    geometric value instead of accumulating one rounding error per call.
    Shadow arrays are replaced rather than written in place: activations saved
    on the tape keep referring to the weights they were computed with.
    """
    shadow, primary = list(shadow), list(primary)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if len(shadow) != len(primary):
        raise ValueError(f"shadow has {len(shadow)} parameters, primary has {len(primary)}")
    for m, p in zip(shadow, primary):
        if _relative_path(m.path) != _relative_path(p.path):
            raise ValueError(f"parameter path mismatch: {m.path!r} vs {p.path!r}")
        if m.shape != p.shape:
            raise ValueError(f"shape mismatch at {p.path!r}: {m.shape} vs {p.shape}")
    if alpha == 1.0:
        return
    for m, p in zip(shadow, primary):
        if alpha == 0.0:
            m.data = p.data.astype(m.dtype, copy=True)
            m.residual = None
            continue
        current = m.data.astype(np.float64)
        if m.residual is not None:
            current += m.residual
        blend = alpha * current + (1.0 - alpha) * p.data.astype(np.float64)
        m.data = blend.astype(m.dtype)
        m.residual = (blend - m.data).astype(m.dtype)
