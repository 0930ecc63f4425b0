"""Value distributions and first-difference statistics of one variable.

Two selections are analysed: a spatial slice (every grid point of one frame
of one sample) and a single-point series (one grid point through all frames
of consecutive samples). Values are min-max normalized to [0, 1] before
histogramming. First differences (temporal along the series, spatial along
both grid axes of the slice) are standardized to zero mean and unit
variance, points beyond 3 standard deviations are dropped, and the rest are
histogrammed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .sprites import DataError

OUTLIER_SIGMA = 3.0


@dataclass
class DiffStats:
    kind: str
    raw_mean: float
    raw_std: float
    n_total: int
    n_retained: int
    hist: np.ndarray
    edges: np.ndarray


@dataclass
class DistributionReport:
    variable: str
    histograms: dict = field(default_factory=dict)     # kind -> (counts, edges)
    differences: list = field(default_factory=list)    # DiffStats

    def write_csv(self, out_dir, prefix: str = "") -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        hp = out_dir / f"{prefix}histograms.csv"
        with open(hp, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["variable", "selection", "bin_lo", "bin_hi", "count"])
            for kind, (counts, edges) in self.histograms.items():
                for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
                    w.writerow([self.variable, kind, repr(float(lo)), repr(float(hi)), int(c)])
            for d in self.differences:
                for c, lo, hi in zip(d.hist, d.edges[:-1], d.edges[1:]):
                    w.writerow([self.variable, f"diff_{d.kind}", repr(float(lo)), repr(float(hi)), int(c)])
        dp = out_dir / f"{prefix}differences.csv"
        with open(dp, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["variable", "difference", "raw_mean", "raw_std", "n_total", "n_retained"])
            for d in self.differences:
                w.writerow([self.variable, d.kind, repr(d.raw_mean), repr(d.raw_std), d.n_total, d.n_retained])
        return [hp, dp]


def normalize_unit(v: np.ndarray) -> np.ndarray:
    """Min-max scale to [0, 1]; a constant selection maps to all zeros."""
    v = np.asarray(v, dtype=np.float64)
    lo, hi = v.min(), v.max()
    return np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)


def standardize_filter(d: np.ndarray, sigma: float = OUTLIER_SIGMA) -> np.ndarray:
    """Standardize and drop |z| > sigma. Zero-spread input standardizes to all zeros."""
    d = np.asarray(d, dtype=np.float64).ravel()
    sd = d.std()
    z = np.zeros_like(d) if sd == 0 else (d - d.mean()) / sd
    return z[np.abs(z) <= sigma]


def _diff_stats(kind: str, d: np.ndarray, bins: int) -> DiffStats:
    d = np.asarray(d, dtype=np.float64).ravel()
    if d.size == 0:
        raise DataError(f"no {kind} differences in the selection")
    kept = standardize_filter(d)
    hist, edges = np.histogram(kept, bins=bins, range=(-OUTLIER_SIGMA, OUTLIER_SIGMA))
    return DiffStats(kind, float(d.mean()), float(d.std()), int(d.size), int(kept.size), hist, edges)


def analyze_fields(data: np.ndarray, variable: str, var_index: int, channel: int = 0, sample: int = 0,
                   frame: int = 0, point: tuple | None = None, bins: int = 50) -> DistributionReport:
    """Analyse ``data`` shaped [samples, frames, N, C, H, W] (physical units)."""
    data = np.asarray(data)
    if data.ndim != 6:
        raise DataError(f"expected [samples, frames, N, C, H, W], got shape {data.shape}")
    S, T, N, C, H, W = data.shape
    if S == 0 or T == 0:
        raise DataError("empty selection: no samples or frames")
    if not (0 <= var_index < N and 0 <= channel < C and 0 <= sample < S and 0 <= frame < T):
        raise DataError(f"selection (var={var_index}, channel={channel}, sample={sample}, frame={frame}) "
                        f"is outside data of shape {data.shape}")
    py, px = point if point is not None else (H // 2, W // 2)
    if not (0 <= py < H and 0 <= px < W):
        raise DataError(f"grid point {(py, px)} outside {H}x{W}")
    slice2d = np.asarray(data[sample, frame, var_index, channel], dtype=np.float64)
    series = np.asarray(data[:, :, var_index, channel, py, px], dtype=np.float64)   # [S, T]
    rep = DistributionReport(variable)
    for kind, values in (("spatial", slice2d), ("point_series", series)):
        rep.histograms[kind] = np.histogram(normalize_unit(values.ravel()), bins=bins, range=(0.0, 1.0))
    if T > 1:
        rep.differences.append(_diff_stats("temporal", np.diff(series, axis=1), bins))
    if H > 1:
        rep.differences.append(_diff_stats("spatial_y", np.diff(slice2d, axis=0), bins))
    if W > 1:
        rep.differences.append(_diff_stats("spatial_x", np.diff(slice2d, axis=1), bins))
    if not rep.differences:
        raise DataError("empty selection: no differences can be formed")
    return rep


def analyze_distribution(ds, variable: str, split: str = "train", role: str = "inputs", channel: int = 0,
                         sample: int = 0, frame: int = 0, point: tuple | None = None, bins: int = 50,
                         max_samples: int | None = None) -> DistributionReport:
    if variable not in ds.variables:
        raise DataError(f"unknown variable {variable!r}; dataset has {ds.variables}")
    data = ds.raw(split, role)
    if max_samples:
        data = data[:max_samples]
    return analyze_fields(data, variable, ds.variables.index(variable), channel, sample, frame, point, bins)
