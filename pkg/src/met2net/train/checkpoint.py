"""Checkpoint directory: ``manifest.json`` plus one raw little-endian blob per array.

Arrays are stored under ``params/<path>.bin``. Besides model parameters
(primary and shadow) the directory holds the Adam moments
(``adam.m.<path>``, ``adam.v.<path>``) and the momentum rounding residuals
(``momentum.residual.<path>``), so a reload resumes bit for bit.
"""

from __future__ import annotations

import json
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..arch.model import ModuleSet
from ..diffcore import Adam

FORMAT = "met2net-checkpoint"
VERSION = 1
_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}
_RESIDUAL = "momentum.residual."


class CheckpointError(Exception):
    pass


class CorruptManifest(CheckpointError):
    pass


class MissingBlob(CheckpointError):
    def __init__(self, path: str, detail: str):
        super().__init__(f"parameter {path!r}: {detail}")
        self.path = path


class ShapeMismatch(CheckpointError):
    pass


class ConfigMismatch(CheckpointError):
    pass


@dataclass
class Checkpoint:
    manifest: dict
    arrays: dict = field(default_factory=dict)

    @property
    def step(self) -> int:
        return int(self.manifest.get("step", 0))

    @property
    def epoch(self) -> int:
        return int(self.manifest.get("epoch", 0))


def _dtype_tag(arr: np.ndarray) -> str:
    if arr.dtype == np.float32:
        return "f32"
    if arr.dtype == np.float64:
        return "f64"
    raise CheckpointError(f"unsupported array dtype {arr.dtype}")


def collect_arrays(ms: ModuleSet, opt: Adam | None = None) -> dict[str, np.ndarray]:
    arrays = {}
    for path, p in ms.named_parameters():
        arrays[path] = p.data
        if p.residual is not None:
            arrays[_RESIDUAL + path] = p.residual
    if opt is not None:
        arrays.update(opt.state_arrays())
    return arrays


def save_checkpoint(directory, ms: ModuleSet, opt: Adam | None = None, step: int = 0, epoch: int = 0,
                    extra: dict | None = None) -> Path:
    """Write the checkpoint; the manifest is written last so a partial save is detectable."""
    directory = Path(directory)
    tmp = directory.with_name(directory.name + ".partial")
    if tmp.exists():
        shutil.rmtree(tmp)
    (tmp / "params").mkdir(parents=True)
    entries = []
    for path, arr in collect_arrays(ms, opt).items():
        tag = _dtype_tag(arr)
        fname = f"params/{path}.bin"
        with open(tmp / fname, "wb") as fh:
            fh.write(np.ascontiguousarray(arr, dtype=_DTYPES[tag]).tobytes())
        entries.append({"path": path, "shape": list(arr.shape), "dtype": tag, "file": fname})
    manifest = {
        "format": FORMAT,
        "version": VERSION,
        "model_config": ms.cfg.to_dict(),
        "step": int(step),
        "epoch": int(epoch),
        "optimizer": None if opt is None else {
            "t": opt.t, "lr": opt.lr, "beta1": opt.beta1, "beta2": opt.beta2, "eps": opt.eps,
        },
        "arrays": entries,
    }
    if extra:
        manifest.update(extra)
    with open(tmp / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    if directory.exists():
        shutil.rmtree(directory)
    os.replace(tmp, directory)
    return directory


def load_checkpoint(directory) -> Checkpoint:
    directory = Path(directory)
    mpath = directory / "manifest.json"
    try:
        with open(mpath) as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise CorruptManifest(f"{mpath}: manifest not found") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptManifest(f"{mpath}: not valid JSON ({exc})") from None
    if not isinstance(manifest, dict) or manifest.get("format") != FORMAT:
        raise CorruptManifest(f"{mpath}: not a checkpoint manifest")
    entries = manifest.get("arrays")
    if not isinstance(entries, list) or "model_config" not in manifest:
        raise CorruptManifest(f"{mpath}: missing 'arrays' or 'model_config'")
    arrays = {}
    for e in entries:
        try:
            path, shape, tag, fname = e["path"], tuple(int(n) for n in e["shape"]), e["dtype"], e["file"]
        except (KeyError, TypeError, ValueError):
            raise CorruptManifest(f"{mpath}: malformed array entry {e!r}") from None
        if tag not in _DTYPES or path in arrays:
            raise CorruptManifest(f"{mpath}: bad dtype or duplicate path for {path!r}")
        dtype = _DTYPES[tag]
        blob = directory / fname
        if not blob.is_file():
            raise MissingBlob(path, f"blob file {blob} is missing")
        expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        raw = blob.read_bytes()
        if len(raw) != expected:
            raise MissingBlob(path, f"blob {blob} holds {len(raw)} bytes, expected {expected}")
        arrays[path] = np.frombuffer(raw, dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
    return Checkpoint(manifest, arrays)


def check_config(ckpt: Checkpoint, ms: ModuleSet) -> None:
    saved = ckpt.manifest["model_config"]
    current = ms.cfg.to_dict()
    diff = sorted(k for k in set(saved) | set(current) if saved.get(k) != current.get(k))
    if diff:
        detail = ", ".join(f"{k}: checkpoint={saved.get(k)!r} model={current.get(k)!r}" for k in diff)
        raise ConfigMismatch(f"checkpoint config disagrees with the model ({detail})")


def restore(ckpt: Checkpoint, ms: ModuleSet, opt: Adam | None = None) -> None:
    """Copy checkpoint arrays into ``ms`` (and ``opt``), validating everything first."""
    check_config(ckpt, ms)
    params = dict(ms.named_parameters())
    for path, p in params.items():
        if path not in ckpt.arrays:
            raise MissingBlob(path, "not present in the checkpoint")
        if ckpt.arrays[path].shape != p.shape:
            raise ShapeMismatch(f"parameter {path!r}: checkpoint shape {ckpt.arrays[path].shape}, model shape {p.shape}")
    unknown = [k for k in ckpt.arrays
               if k not in params and not k.startswith(("adam.", _RESIDUAL))]
    if unknown:
        raise ShapeMismatch(f"checkpoint holds arrays the model does not have: {unknown[:5]}")
    for path, p in params.items():
        p.data = ckpt.arrays[path].astype(p.dtype, copy=True)
        res = ckpt.arrays.get(_RESIDUAL + path)
        p.residual = None if res is None else res.astype(p.dtype, copy=True)
        p.zero_grad()
    if opt is not None:
        state = ckpt.manifest.get("optimizer") or {}
        opt.t = int(state.get("t", 0))
        opt.m = {k[len("adam.m."):]: v.copy() for k, v in ckpt.arrays.items() if k.startswith("adam.m.")}
        opt.v = {k[len("adam.v."):]: v.copy() for k, v in ckpt.arrays.items() if k.startswith("adam.v.")}
