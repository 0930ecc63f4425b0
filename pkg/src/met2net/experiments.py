"""Desk-scale experiments: the four-row ablation and fixed-batch overfitting runs.

Ablation runs are stored one directory per (configuration, seed) with a
``result.json``; a finished run is reused as long as its recorded key (the
experiment settings plus a hash of the training-path source) still matches, so an
interrupted sweep continues where it stopped and a code change invalidates
stale numbers.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .arch import ModelConfig, ModuleSet
from .data import SpriteSceneConfig, generate_mvm, generate_sample, load_dataset
from .train import TrainConfig, fit, make_optimizer, split_mse, train_step, train_step_e2e

# (name, multi_encoder_decoder, variable_attention, its_enabled), rows of the ablation table
ABLATION_ROWS = [
    ("Baseline", False, False, False),
    ("+MED", True, False, False),
    ("+VA", True, True, False),
    ("+ITS", True, True, True),
]


COMPUTE_PACKAGES = ("diffcore", "arch", "train", "data")


def default_ablation_dir() -> Path:
    """``$MET2NET_ABLATION_DIR``, else ``~/.cache/met2net/ablation`` (about 1.5 GB of data plus runs)."""
    env = os.environ.get("MET2NET_ABLATION_DIR")
    return Path(env) if env else Path.home() / ".cache" / "met2net" / "ablation"


def source_hash() -> str:
    """Hash of the code that determines training results, used to invalidate cached runs.

    Reporting, plotting and CLI code is left out so editing it keeps finished runs valid.
    """
    root = Path(__file__).resolve().parent
    h = hashlib.sha256()
    for p in sorted(q for pkg in COMPUTE_PACKAGES for q in (root / pkg).rglob("*.py")):
        h.update(str(p.relative_to(root)).encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:16]


@dataclass
class AblationSettings:
    """Desk-scale sweep settings.

    ``alpha`` defaults to 0.9 rather than the training default 0.999. A run of
    20 epochs over 1000 scenes is about 1260 optimizer steps, and at 0.999 the
    shadows would lag the trained modules by roughly the whole run. 0.9 keeps
    the lag near the same small fraction of training as 0.999 over a full-size
    run of about 125k steps.
    """

    n_train: int = 1000
    n_test: int = 500
    epochs: int = 20
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    data_seed: int = 2024
    alpha: float = 0.9
    batch_size: int = 16
    lr: float = 1e-3
    model: dict = field(default_factory=dict)   # ModelConfig overrides shared by every row

    def key(self) -> str:
        blob = json.dumps({"settings": asdict(self), "source": source_hash()}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _row_configs(settings: AblationSettings, med: bool, va: bool, its: bool, seed: int):
    mcfg = ModelConfig(**{**settings.model, "multi_encoder_decoder": med, "variable_attention": va})
    tcfg = TrainConfig(alpha=settings.alpha, lr=settings.lr, batch_size=settings.batch_size,
                       epochs=settings.epochs, seed=seed, its_enabled=its, val_every=0)
    return mcfg, tcfg


def run_ablation(work_dir, settings: AblationSettings | None = None, log=None) -> list[dict]:
    """Train every (row, seed) pair, score it on the full test split, and summarize per row."""
    settings = settings or AblationSettings()
    work = Path(work_dir)
    key = settings.key()
    data_dir = work / "data"
    scene = SpriteSceneConfig(n_train=settings.n_train, n_test=settings.n_test, seed=settings.data_seed)
    if not (data_dir / "manifest.json").is_file() or \
            json.loads((data_dir / "manifest.json").read_text()).get("generator", {}) != \
            {"kind": "moving-sprites", **scene.to_dict()}:
        generate_mvm(scene, data_dir)
    ds = load_dataset(data_dir)
    summary = []
    for name, med, va, its in ABLATION_ROWS:
        per_seed = []
        for seed in settings.seeds:
            run = work / "runs" / f"{name.strip('+').lower()}_seed{seed}"
            res_path = run / "result.json"
            if res_path.is_file():
                res = json.loads(res_path.read_text())
                if res.get("key") == key:
                    per_seed.append(res)
                    continue
            mcfg, tcfg = _row_configs(settings, med, va, its, seed)
            t0 = time.perf_counter()
            ms = ModuleSet(mcfg, seed=seed)
            fit(ms, ds, tcfg, run)
            mse = split_mse(ms, ds, "test", 32)
            res = {"key": key, "config": name, "seed": seed, "test_mse": mse,
                   "seconds": time.perf_counter() - t0, "params": ms.inference_parameter_count()}
            res_path.write_text(json.dumps(res, indent=1))
            per_seed.append(res)
            if log:
                log(f"{name} seed {seed}: test MSE {mse:.6f} ({res['seconds']:.0f} s)")
        vals = np.array([r["test_mse"] for r in per_seed])
        summary.append({"config": name, "med": med, "va": va, "its": its, "mean_mse": float(vals.mean()),
                        "std_mse": float(vals.std()), "per_seed": vals.tolist(),
                        "seconds": float(sum(r["seconds"] for r in per_seed)),
                        "params": per_seed[0]["params"]})
    return summary


def write_ablation_csv(rows: list[dict], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["config", "med", "va", "its", "mean_mse", "std_mse", "per_seed_mse", "seconds", "params"])
        for r in rows:
            w.writerow([r["config"], r["med"], r["va"], r["its"], repr(r["mean_mse"]), repr(r["std_mse"]),
                        " ".join(repr(v) for v in r["per_seed"]), f"{r['seconds']:.1f}", r["params"]])
    return path


def overfit_batch(n_samples: int = 8, seed: int = 0, scene: SpriteSceneConfig | None = None):
    """A fixed standardized batch (x, y) of freshly generated scenes."""
    scene = scene or SpriteSceneConfig(n_train=n_samples, n_test=0, seed=seed)
    frames = np.stack([generate_sample(scene, "train", i) for i in range(n_samples)])
    mean = frames.mean(axis=(0, 1, 3, 4, 5), keepdims=True, dtype=np.float64)
    std = frames.std(axis=(0, 1, 3, 4, 5), keepdims=True, dtype=np.float64)
    z = ((frames - mean) / std).astype(np.float32)
    return z[:, :scene.in_frames], z[:, scene.in_frames:]


def overfit_run(its: bool, steps: int = 300, n_samples: int = 8, lr: float = 1e-3, seed: int = 0,
                alpha: float = 0.999, model: dict | None = None) -> list[float]:
    """Train on one fixed batch and return the per-step total loss."""
    x, y = overfit_batch(n_samples, seed)
    ms = ModuleSet(ModelConfig(**(model or {})), seed=seed)
    tcfg = TrainConfig(alpha=alpha, lr=lr, its_enabled=its, batch_size=n_samples, seed=seed)
    opt = make_optimizer(ms, tcfg)
    step = train_step if its else train_step_e2e
    return [step(ms, opt, x, y, tcfg).total for _ in range(steps)]
