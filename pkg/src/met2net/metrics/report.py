"""Split-level evaluation: per-variable, per-lead-time metric tables, CSV and PGM output."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import MetricError, acc_fields, pcc_fields, psnr_from_mse, ssim_fields

METRICS = ["mse", "mae", "rmse", "ssim", "psnr", "pcc", "r2", "acc"]


@dataclass
class MetricsReport:
    variables: list
    values: np.ndarray                 # [n_vars, lead_times, len(METRICS)]
    abs_error: np.ndarray              # mean |pred - target| per variable and lead time, [n_vars, T', H, W]
    samples: int
    dynamic_range: list = field(default_factory=list)

    def get(self, variable: str | int, metric: str, lead: int | None = None) -> float:
        i = variable if isinstance(variable, int) else self.variables.index(variable)
        col = self.values[i, :, METRICS.index(metric)]
        return float(col.mean() if lead is None else col[lead])

    def rows(self):
        for i, name in enumerate(self.variables):
            for t in range(self.values.shape[1]):
                for k, metric in enumerate(METRICS):
                    yield name, t + 1, metric, float(self.values[i, t, k])

    def overall_mse(self) -> float:
        return float(self.values[:, :, 0].mean())


class _Accumulator:
    def __init__(self, n_vars, lead, hw):
        shape = (n_vars, lead)
        self.sse = np.zeros(shape)
        self.sae = np.zeros(shape)
        self.sum_y = np.zeros(shape)
        self.sum_y2 = np.zeros(shape)
        self.n = np.zeros(shape)
        self.ssim = np.zeros(shape)
        self.pcc = np.zeros(shape)
        self.acc = np.zeros(shape)
        self.frames = np.zeros(shape)
        self.abs_err = np.zeros((n_vars, lead) + hw)


def evaluate(predict, ds, split: str, batch_size: int = 16, limit: int | None = None,
             dynamic_range=None) -> MetricsReport:
    """Score ``predict(x_standardized) -> y_standardized`` over a split in physical units.

    ``dynamic_range`` (scalar or one per variable) defaults to the training
    split's value range and feeds ssim and psnr.
    """
    n_vars, lead = ds.n_vars, ds.out_frames
    if dynamic_range is None:
        if ds.value_range is None:
            raise MetricError("dataset has no value range; pass dynamic_range explicitly")
        L = np.asarray(ds.value_range, dtype=np.float64)
    else:
        L = np.broadcast_to(np.asarray(dynamic_range, dtype=np.float64), (n_vars,)).copy()
    if np.any(L <= 0):
        raise MetricError(f"dynamic range must be positive, got {L.tolist()}")
    acc_ = _Accumulator(n_vars, lead, (ds.height, ds.width))
    clim = ds.climatology.astype(np.float64)
    total = 0
    for x, _, ix in ds.batches(split, batch_size, limit=limit):
        pred = ds.denormalize(predict(x)).astype(np.float64)
        target = np.asarray(ds.raw(split, "targets")[ix], dtype=np.float64)
        total += len(ix)
        for i, c in enumerate(ds.channels_per_var):
            p = pred[:, :, i, :c]            # [B, T', c, H, W]
            y = target[:, :, i, :c]
            d = p - y
            acc_.sse[i] += np.sum(d * d, axis=(0, 2, 3, 4))
            acc_.sae[i] += np.sum(np.abs(d), axis=(0, 2, 3, 4))
            acc_.sum_y[i] += np.sum(y, axis=(0, 2, 3, 4))
            acc_.sum_y2[i] += np.sum(y * y, axis=(0, 2, 3, 4))
            acc_.n[i] += d[:, 0].size
            acc_.abs_err[i] += np.abs(d).mean(axis=2).sum(axis=0)
            pt, yt = np.moveaxis(p, 1, 0), np.moveaxis(y, 1, 0)   # [T', B, c, H, W]
            acc_.ssim[i] += ssim_fields(pt, yt, L[i]).reshape(lead, -1).sum(axis=1)
            acc_.pcc[i] += pcc_fields(pt, yt).reshape(lead, -1).sum(axis=1)
            acc_.acc[i] += acc_fields(pt, yt, clim[i, :c]).reshape(lead, -1).sum(axis=1)
            acc_.frames[i] += p.shape[0] * c
    if total == 0:
        raise MetricError(f"split {split!r} has no samples to evaluate")
    mse = acc_.sse / acc_.n
    sst = acc_.sum_y2 - acc_.sum_y ** 2 / acc_.n
    if np.any(sst <= 0):
        raise MetricError("r2 is undefined: a variable has a constant target at some lead time")
    values = np.zeros((n_vars, lead, len(METRICS)))
    values[..., 0] = mse
    values[..., 1] = acc_.sae / acc_.n
    values[..., 2] = np.sqrt(mse)
    values[..., 3] = acc_.ssim / acc_.frames
    values[..., 4] = [[psnr_from_mse(m, L[i]) for m in mse[i]] for i in range(n_vars)]
    values[..., 5] = acc_.pcc / acc_.frames
    values[..., 6] = 1.0 - acc_.sse / sst
    values[..., 7] = acc_.acc / acc_.frames
    return MetricsReport(list(ds.variables), values, acc_.abs_err / total, total, L.tolist())


def write_metrics_csv(report: MetricsReport, path) -> Path:
    """One row per (variable, lead time, metric)."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variable", "leadtime", "metric", "value"])
        for name, t, metric, value in report.rows():
            w.writerow([name, t, metric, repr(value)])
    return path


def write_summary_csv(report: MetricsReport, path) -> Path:
    """Metrics averaged over lead times, one row per (variable, metric)."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variable", "metric", "value"])
        for i, name in enumerate(report.variables):
            for k, metric in enumerate(METRICS):
                w.writerow([name, metric, repr(float(report.values[i, :, k].mean()))])
    return path


def write_pgm(path, image: np.ndarray, scale: float) -> Path:
    """Binary 8-bit PGM; pixel = round(255 * clip(value / scale, 0, 1))."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"PGM needs a 2D image, got shape {img.shape}")
    q = np.zeros(img.shape, dtype=np.uint8) if scale <= 0 else \
        np.rint(255.0 * np.clip(img / scale, 0.0, 1.0)).astype(np.uint8)
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(q.tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        end = pos
        while end < len(raw) and not raw[end:end + 1].isspace():
            end += 1
        if end == pos:
            raise ValueError(f"{path}: truncated PGM header")
        fields.append(raw[pos:end])
        pos = end
    if fields[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM is supported")
    data = raw[pos + 1:pos + 1 + w * h]    # exactly one whitespace byte ends the header
    if len(data) != w * h:
        raise ValueError(f"{path}: expected {w * h} pixels, found {len(data)}")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w)


def write_error_heatmaps(report: MetricsReport, out_dir) -> list[Path]:
    """One PGM per (variable, lead time) of the mean |pred - target|, scaled by the variable's range."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, name in enumerate(report.variables):
        for t in range(report.abs_error.shape[1]):
            paths.append(write_pgm(out_dir / f"abs_error_{name}_t{t + 1:02d}.pgm",
                                   report.abs_error[i, t], report.dynamic_range[i]))
    return paths
