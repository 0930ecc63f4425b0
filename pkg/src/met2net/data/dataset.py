"""Manifest + blob datasets: writing, loading, standardization and batching.

Layout of a dataset directory::

    manifest.json
    <split>_inputs.bin    raw little-endian float32, C-order [sample, T, N, C, H, W]
    <split>_targets.bin   same with T' frames
    climatology.bin       float32 [N, C, H, W], per-pixel mean of the training split

Variables with fewer channels than the widest one are zero-padded on the
channel axis; padding stays zero after standardization.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .sprites import DataError

FORMAT = "met2net-dataset"
VERSION = 1
_F32 = np.dtype("<f4")


class _RunningStats:
    """Per-variable mean/variance merged batch by batch (Chan et al. update)."""

    def __init__(self, n_vars: int):
        self.n = np.zeros(n_vars)
        self.mean = np.zeros(n_vars)
        self.m2 = np.zeros(n_vars)
        self.lo = np.full(n_vars, np.inf)
        self.hi = np.full(n_vars, -np.inf)

    def add(self, i: int, values: np.ndarray):
        v = values.astype(np.float64).ravel()
        nb = v.size
        if nb == 0:
            return
        self.lo[i] = min(self.lo[i], v.min())
        self.hi[i] = max(self.hi[i], v.max())
        mb = v.mean()
        m2b = ((v - mb) ** 2).sum()
        n = self.n[i] + nb
        delta = mb - self.mean[i]
        self.mean[i] += delta * nb / n
        self.m2[i] += m2b + delta * delta * self.n[i] * nb / n
        self.n[i] = n

    def std(self) -> np.ndarray:
        return np.sqrt(self.m2 / np.maximum(self.n, 1))


class _SplitSink:
    def __init__(self, writer: "DatasetWriter", name: str):
        self.w = writer
        self.name = name
        self.count = 0
        self.fx = open(writer.out_dir / f"{name}_inputs.bin", "wb")
        self.fy = open(writer.out_dir / f"{name}_targets.bin", "wb")

    def append(self, x: np.ndarray, y: np.ndarray):
        w = self.w
        x = np.asarray(x, dtype=np.float32)
        y = np.asarray(y, dtype=np.float32)
        if x.shape != w.frame_shape(w.in_frames) or y.shape != w.frame_shape(w.out_frames):
            raise DataError(f"sample shapes {x.shape}/{y.shape} do not match "
                            f"{w.frame_shape(w.in_frames)}/{w.frame_shape(w.out_frames)}")
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            raise DataError(f"non-finite values in {self.name} sample {self.count}")
        self.fx.write(x.astype(_F32, copy=False).tobytes())
        self.fy.write(y.astype(_F32, copy=False).tobytes())
        if self.name == "train":
            for i, c in enumerate(w.channels_per_var):
                w.stats.add(i, x[:, i, :c])
                w.stats.add(i, y[:, i, :c])
            w.clim_sum += x.sum(axis=0, dtype=np.float64) + y.sum(axis=0, dtype=np.float64)
            w.clim_frames += x.shape[0] + y.shape[0]
        self.count += 1

    def close(self):
        self.fx.close()
        self.fy.close()


class DatasetWriter:
    """Streams samples to disk split by split, then writes statistics and the manifest."""

    def __init__(self, out_dir, in_frames: int, out_frames: int, variables: list, channels_per_var: list,
                 height: int, width: int, extra: dict | None = None):
        self.out_dir = Path(out_dir)
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise DataError(f"cannot create dataset directory {self.out_dir}: {exc}") from None
        if len(variables) != len(channels_per_var):
            raise DataError("one channel count per variable is required")
        self.in_frames, self.out_frames = int(in_frames), int(out_frames)
        self.variables = list(variables)
        self.channels_per_var = [int(c) for c in channels_per_var]
        self.height, self.width = int(height), int(width)
        self.cmax = max(self.channels_per_var)
        self.extra = extra or {}
        self.splits: dict[str, int] = {}
        self.stats = _RunningStats(len(variables))
        self.clim_sum = np.zeros((len(variables), self.cmax, self.height, self.width))
        self.clim_frames = 0

    def frame_shape(self, frames: int) -> tuple:
        return (frames, len(self.variables), self.cmax, self.height, self.width)

    @contextmanager
    def split(self, name: str):
        try:
            sink = _SplitSink(self, name)
        except OSError as exc:
            raise DataError(f"cannot write split {name!r} under {self.out_dir}: {exc}") from None
        try:
            yield sink
        finally:
            sink.close()
        self.splits[name] = sink.count

    def finish(self) -> dict:
        if self.splits.get("train", 0) == 0:
            raise DataError("normalization statistics need a non-empty 'train' split")
        std = self.stats.std()
        if np.any(std <= 0):
            bad = [v for v, s in zip(self.variables, std) if s <= 0]
            raise DataError(f"variables with zero variance in the training split: {bad}")
        clim = (self.clim_sum / self.clim_frames).astype(_F32)
        (self.out_dir / "climatology.bin").write_bytes(clim.tobytes())
        manifest = {
            "format": FORMAT,
            "version": VERSION,
            "dims": {"in_frames": self.in_frames, "out_frames": self.out_frames, "n_vars": len(self.variables),
                     "channels": self.cmax, "height": self.height, "width": self.width},
            "variables": self.variables,
            "channels_per_var": self.channels_per_var,
            "stats": {"mean": self.stats.mean.tolist(), "std": std.tolist(), "min": self.stats.lo.tolist(),
                      "max": self.stats.hi.tolist(), "source_split": "train"},
            "splits": {name: {"samples": n, "inputs": f"{name}_inputs.bin", "targets": f"{name}_targets.bin"}
                       for name, n in self.splits.items()},
            "climatology": "climatology.bin",
            "dtype": "f32",
            **self.extra,
        }
        with open(self.out_dir / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=1)
        return manifest


def write_windows(series: np.ndarray, out_dir, in_frames: int, out_frames: int, variables: list,
                  channels_per_var: list | None = None, stride: int = 1, test_fraction: float = 0.2) -> dict:
    """Cut a gridded series [time, N, C, H, W] into (input, target) windows.

    Windows start every ``stride`` steps; the earliest windows form the
    training split and the latest ``test_fraction`` of them the test split.
    """
    series = np.asarray(series, dtype=np.float32)
    if series.ndim != 5:
        raise DataError(f"series must be [time, N, C, H, W], got shape {series.shape}")
    span = in_frames + out_frames
    starts = list(range(0, series.shape[0] - span + 1, stride))
    if not starts:
        raise DataError(f"series of {series.shape[0]} steps is shorter than one window ({span})")
    n_test = int(round(len(starts) * test_fraction))
    channels_per_var = channels_per_var or [series.shape[2]] * series.shape[1]
    writer = DatasetWriter(out_dir, in_frames, out_frames, variables, channels_per_var,
                           series.shape[3], series.shape[4], extra={"generator": {"kind": "windows", "stride": stride}})
    for name, part in (("train", starts[:len(starts) - n_test]), ("test", starts[len(starts) - n_test:])):
        with writer.split(name) as sink:
            for s in part:
                sink.append(series[s:s + in_frames], series[s + in_frames:s + span])
    return writer.finish()


class GriddedDataset:
    def __init__(self, manifest: dict, root: Path):
        self.manifest = manifest
        self.root = root
        d = manifest["dims"]
        self.in_frames, self.out_frames = int(d["in_frames"]), int(d["out_frames"])
        self.n_vars, self.channels = int(d["n_vars"]), int(d["channels"])
        self.height, self.width = int(d["height"]), int(d["width"])
        self.variables = list(manifest["variables"])
        self.channels_per_var = [int(c) for c in manifest["channels_per_var"]]
        self.mean = np.asarray(manifest["stats"]["mean"], dtype=np.float64)
        self.std = np.asarray(manifest["stats"]["std"], dtype=np.float64)
        lo, hi = manifest["stats"].get("min"), manifest["stats"].get("max")
        # value range per variable on the training split, the default dynamic range for ssim/psnr
        self.value_range = (np.asarray(hi, dtype=np.float64) - np.asarray(lo, dtype=np.float64)
                            if lo is not None and hi is not None else None)
        mask = np.zeros((self.n_vars, self.channels), dtype=bool)
        for i, c in enumerate(self.channels_per_var):
            mask[i, :c] = True
        self.channel_mask = mask[:, :, None, None]
        self._mem: dict = {}
        self._clim = None

    @property
    def splits(self) -> list[str]:
        return list(self.manifest["splits"])

    def n_samples(self, split: str) -> int:
        return int(self._split_entry(split)["samples"])

    def _split_entry(self, split: str) -> dict:
        try:
            return self.manifest["splits"][split]
        except KeyError:
            raise DataError(f"dataset has no split {split!r} (available: {self.splits})") from None

    def raw(self, split: str, role: str) -> np.ndarray:
        """Memory-mapped physical values [S, T, N, C, H, W]; role is 'inputs' or 'targets'."""
        key = (split, role)
        if key not in self._mem:
            entry = self._split_entry(split)
            frames = self.in_frames if role == "inputs" else self.out_frames
            shape = (int(entry["samples"]), frames, self.n_vars, self.channels, self.height, self.width)
            path = self.root / entry[role]
            expected = int(np.prod(shape)) * _F32.itemsize
            size = path.stat().st_size if path.is_file() else -1
            if size != expected:
                what = "missing" if size < 0 else f"{size} bytes"
                raise DataError(f"{path}: {what}, manifest dims {shape} need {expected} bytes")
            self._mem[key] = (np.memmap(path, dtype=_F32, mode="r", shape=shape) if shape[0]
                              else np.zeros(shape, dtype=np.float32))
        return self._mem[key]

    @property
    def climatology(self) -> np.ndarray:
        if self._clim is None:
            path = self.root / self.manifest.get("climatology", "climatology.bin")
            shape = (self.n_vars, self.channels, self.height, self.width)
            try:
                raw = path.read_bytes()
            except OSError as exc:
                raise DataError(f"cannot read climatology {path}: {exc}") from None
            if len(raw) != int(np.prod(shape)) * 4:
                raise DataError(f"{path}: size does not match {shape}")
            self._clim = np.frombuffer(raw, dtype=_F32).reshape(shape).astype(np.float32)
        return self._clim

    def _stat(self, v: np.ndarray) -> np.ndarray:
        return v[:, None, None, None]

    def normalize(self, x: np.ndarray) -> np.ndarray:
        """(x - mean) / std per variable on the N axis (axis -4); padding channels stay 0."""
        x = np.asarray(x, dtype=np.float64)
        out = (x - self._stat(self.mean)) / self._stat(self.std)
        return np.where(self.channel_mask, out, 0.0).astype(np.float32)

    def denormalize(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        out = z * self._stat(self.std) + self._stat(self.mean)
        return np.where(self.channel_mask, out, 0.0).astype(np.float32)

    def batch(self, split: str, idx) -> tuple[np.ndarray, np.ndarray]:
        idx = np.sort(np.asarray(idx, dtype=np.int64))
        x = self.raw(split, "inputs")[idx]
        y = self.raw(split, "targets")[idx]
        return self.normalize(x), self.normalize(y)

    def order(self, split: str, shuffle: bool, seed: int = 0, epoch: int = 0) -> np.ndarray:
        n = self.n_samples(split)
        if not shuffle:
            return np.arange(n)
        return np.random.default_rng([int(seed), int(epoch)]).permutation(n)

    def batches(self, split: str, batch_size: int, shuffle: bool = False, seed: int = 0, epoch: int = 0,
                limit: int | None = None, prefetch: bool = False):
        """Yield standardized (x, y, indices); batch order depends only on (seed, epoch).

        Rows of a batch are returned in the permuted order, so shuffling
        changes both batch membership and position.
        """
        order = self.order(split, shuffle, seed, epoch)
        if limit:
            order = order[:limit]
        chunks = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]

        def load(ix):
            x = self.raw(split, "inputs")[ix]
            y = self.raw(split, "targets")[ix]
            return self.normalize(x), self.normalize(y), ix

        if not prefetch:
            for ix in chunks:
                yield load(ix)
            return
        with ThreadPoolExecutor(max_workers=1) as pool:
            pending = pool.submit(load, chunks[0]) if chunks else None
            for k in range(len(chunks)):
                current = pending.result()
                pending = pool.submit(load, chunks[k + 1]) if k + 1 < len(chunks) else None
                yield current


def load_dataset(path) -> GriddedDataset:
    """Open a dataset from its directory or manifest path and validate it against the blobs."""
    path = Path(path)
    mpath = path / "manifest.json" if path.is_dir() else path
    try:
        with open(mpath) as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read dataset manifest {mpath}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{mpath}: invalid JSON ({exc})") from None
    if not isinstance(manifest, dict) or manifest.get("format") != FORMAT:
        raise DataError(f"{mpath}: not a dataset manifest")
    try:
        ds = GriddedDataset(manifest, mpath.parent)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{mpath}: malformed manifest ({exc!r})") from None
    if len(ds.variables) != ds.n_vars or len(ds.channels_per_var) != ds.n_vars:
        raise DataError(f"{mpath}: variable list does not match n_vars={ds.n_vars}")
    if ds.mean.shape != (ds.n_vars,) or ds.std.shape != (ds.n_vars,):
        raise DataError(f"{mpath}: stats must have one mean/std per variable")
    if not np.all(np.isfinite(ds.std)) or np.any(ds.std <= 0):
        raise DataError(f"{mpath}: every variable needs a positive standard deviation")
    if max(ds.channels_per_var) != ds.channels:
        raise DataError(f"{mpath}: channels={ds.channels} but channels_per_var={ds.channels_per_var}")
    for split in ds.splits:
        ds.raw(split, "inputs")
        ds.raw(split, "targets")
    return ds
