"""Field-comparison metrics and linear CKA.

Functions taking ``[..., H, W]`` arrays treat every trailing 2D slice as
one frame. Correlation-type scores (pcc, acc) are computed per frame and
then averaged; mse/mae/r2 pool all elements.
"""

from __future__ import annotations

import numpy as np

PSNR_CAP = 100.0


class MetricError(ValueError):
    """A metric is undefined for the given input (shape mismatch, zero variance, too small)."""


def _pair(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise MetricError(f"shape mismatch: pred {pred.shape} vs target {target.shape}")
    if pred.size == 0:
        raise MetricError("empty input")
    return pred, target


def pixel_metrics(pred, target) -> dict:
    pred, target = _pair(pred, target)
    d = pred - target
    mse = float(np.mean(d * d))
    return {"mse": mse, "mae": float(np.mean(np.abs(d))), "rmse": float(np.sqrt(mse))}


def psnr_from_mse(mse: float, dynamic_range: float) -> float:
    if dynamic_range <= 0:
        raise MetricError(f"dynamic range must be positive, got {dynamic_range}")
    if mse < 1e-10:
        return PSNR_CAP
    return float(10.0 * np.log10(dynamic_range ** 2 / mse))


def psnr(pred, target, dynamic_range: float) -> float:
    return psnr_from_mse(pixel_metrics(pred, target)["mse"], dynamic_range)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    k = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(k * k) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    n = g.size
    x = np.lib.stride_tricks.sliding_window_view(x, n, axis=-1) @ g
    x = np.lib.stride_tricks.sliding_window_view(x, n, axis=-2) @ g
    return x


def ssim_fields(pred, target, dynamic_range: float, window: int = 11, sigma: float = 1.5) -> np.ndarray:
    """SSIM of every trailing [H, W] frame, averaged over all fully-contained windows."""
    pred, target = _pair(pred, target)
    if pred.ndim < 2:
        raise MetricError("ssim needs at least 2D fields")
    if pred.shape[-1] < window or pred.shape[-2] < window:
        raise MetricError(f"field {pred.shape[-2:]} is smaller than the {window}x{window} window")
    if dynamic_range <= 0:
        raise MetricError(f"dynamic range must be positive, got {dynamic_range}")
    c1 = (0.01 * dynamic_range) ** 2
    c2 = (0.03 * dynamic_range) ** 2
    g = gaussian_window(window, sigma)
    mu1, mu2 = _filter_valid(pred, g), _filter_valid(target, g)
    s11 = _filter_valid(pred * pred, g) - mu1 * mu1
    s22 = _filter_valid(target * target, g) - mu2 * mu2
    s12 = _filter_valid(pred * target, g) - mu1 * mu2
    num = (2 * mu1 * mu2 + c1) * (2 * s12 + c2)
    den = (mu1 * mu1 + mu2 * mu2 + c1) * (s11 + s22 + c2)
    return (num / den).mean(axis=(-2, -1))


def ssim(pred, target, dynamic_range: float, window: int = 11, sigma: float = 1.5) -> float:
    return float(np.mean(ssim_fields(pred, target, dynamic_range, window, sigma)))


def _frames(a: np.ndarray) -> np.ndarray:
    if a.ndim < 2:
        return a.reshape(1, -1)
    return a.reshape(-1, a.shape[-2] * a.shape[-1])


def _frame_corr(a: np.ndarray, b: np.ndarray, what: str) -> np.ndarray:
    a = a - a.mean(axis=1, keepdims=True)
    b = b - b.mean(axis=1, keepdims=True)
    va, vb = np.sum(a * a, axis=1), np.sum(b * b, axis=1)
    if np.any(va == 0) or np.any(vb == 0):
        raise MetricError(f"{what} is undefined for a zero-variance frame")
    return np.sum(a * b, axis=1) / np.sqrt(va * vb)


def pcc_fields(pred, target) -> np.ndarray:
    pred, target = _pair(pred, target)
    return _frame_corr(_frames(pred), _frames(target), "pcc")


def pcc(pred, target) -> float:
    """Pearson correlation of each frame, averaged over frames."""
    return float(np.mean(pcc_fields(pred, target)))


def acc_fields(pred, target, climatology) -> np.ndarray:
    pred, target = _pair(pred, target)
    clim = np.broadcast_to(np.asarray(climatology, dtype=np.float64), pred.shape)
    return _frame_corr(_frames(pred - clim), _frames(target - clim), "acc")


def acc(pred, target, climatology) -> float:
    """Centered anomaly correlation against a climatology, per frame then averaged."""
    return float(np.mean(acc_fields(pred, target, climatology)))


def r2(pred, target) -> float:
    pred, target = _pair(pred, target)
    sst = float(np.sum((target - target.mean()) ** 2))
    if sst == 0:
        raise MetricError("r2 is undefined for a constant target")
    return 1.0 - float(np.sum((target - pred) ** 2)) / sst


def linear_cka(x, y) -> float:
    """Linear centered kernel alignment between two representations of the same n samples."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2:
        raise MetricError(f"cka needs 2D [n, features] inputs, got {x.shape} and {y.shape}")
    if x.shape[0] != y.shape[0]:
        raise MetricError(f"cka needs the same number of rows, got {x.shape[0]} and {y.shape[0]}")
    if x.shape[0] < 2:
        raise MetricError("cka needs at least 2 samples")
    x = x - x.mean(axis=0)
    y = y - y.mean(axis=0)
    if not np.any(x) or not np.any(y):
        raise MetricError("cka is undefined for a representation that is constant across samples")
    n = x.shape[0]
    if max(x.shape[1], y.shape[1]) > n:
        kx, ky = x @ x.T, y @ y.T
        cross = float(np.sum(kx * ky))
        nx, ny = np.linalg.norm(kx), np.linalg.norm(ky)
    else:
        cross = float(np.linalg.norm(y.T @ x) ** 2)
        nx, ny = np.linalg.norm(x.T @ x), np.linalg.norm(y.T @ y)
    return float(min(1.0, cross / (nx * ny)))
