"""Epoch loop with seeded shuffling, validation, best/last checkpoints and a CSV history."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..arch.model import ModuleSet, forward_inference
from .checkpoint import ConfigMismatch, load_checkpoint, restore, save_checkpoint
from .config import TrainConfig
from .steps import make_optimizer, train_step, train_step_e2e

HISTORY_FIELDS = ["epoch", "step", "loss_rec", "loss_pre", "total", "val_mse"]
# fields that may differ between an interrupted run and its resumption
_RESUMABLE = {"epochs"}


def validation_split(ds) -> str | None:
    for name in ("val", "test"):
        if name in ds.splits and ds.n_samples(name) > 0:
            return name
    return None


def split_mse(ms: ModuleSet, ds, split: str, batch_size: int, limit: int | None = None) -> float:
    """MSE of forward_inference over a split, in physical (denormalized) units."""
    sse, count = 0.0, 0
    for x, _, ix in ds.batches(split, batch_size, limit=limit or None):
        pred = ds.denormalize(forward_inference(ms, x))
        diff = pred.astype(np.float64) - ds.raw(split, "targets")[ix]
        sse += float(np.sum(diff * diff))
        count += diff.size
    return sse / count


def read_history(path) -> list[dict]:
    path = Path(path)
    if not path.is_file():
        return []
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_history(path, rows: list[dict]) -> None:
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in HISTORY_FIELDS})
    tmp.replace(path)


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def fit(ms: ModuleSet, ds, cfg: TrainConfig, run_dir, resume: bool = False, log=None) -> list[dict]:
    """Train for ``cfg.epochs`` epochs and return the history rows.

    Checkpoints go to ``run_dir/checkpoints/last`` after every epoch and to
    ``run_dir/checkpoints/best`` whenever validation MSE improves. Batch
    order is a function of (seed, epoch) only, so resuming from ``last``
    replays exactly the epochs an uninterrupted run would have done.
    """
    run_dir = Path(run_dir)
    ckdir = run_dir / "checkpoints"
    ckdir.mkdir(parents=True, exist_ok=True)
    hist_path = run_dir / "history.csv"
    opt = make_optimizer(ms, cfg)
    step_fn = train_step if cfg.its_enabled else train_step_e2e
    val_split = validation_split(ds) if cfg.val_every else None

    start, rows, best = 0, [], None
    if resume and (ckdir / "last" / "manifest.json").is_file():
        ckpt = load_checkpoint(ckdir / "last")
        saved = ckpt.manifest.get("train_config", {})
        diff = sorted(k for k, v in cfg.to_dict().items() if k not in _RESUMABLE and saved.get(k) != v)
        if diff:
            raise ConfigMismatch(f"cannot resume: train config differs in {diff}")
        restore(ckpt, ms, opt)
        start = ckpt.epoch
        best = ckpt.manifest.get("best_val_mse")
        rows = [r for r in read_history(hist_path) if int(r["epoch"]) <= start]

    for epoch in range(start, cfg.epochs):
        sums = np.zeros(3)
        n = 0
        for x, y, _ in ds.batches("train", cfg.batch_size, shuffle=True, seed=cfg.seed, epoch=epoch, prefetch=True):
            rep = step_fn(ms, opt, x, y, cfg)
            sums += (rep.loss_rec, rep.loss_pre, rep.total)
            n += 1
        val = None
        if val_split and ((epoch + 1) % cfg.val_every == 0 or epoch + 1 == cfg.epochs):
            val = split_mse(ms, ds, val_split, cfg.batch_size, cfg.val_samples)
        means = sums / max(n, 1)
        rows.append({"epoch": str(epoch + 1), "step": str(opt.t), "loss_rec": _fmt(means[0]),
                     "loss_pre": _fmt(means[1]), "total": _fmt(means[2]), "val_mse": _fmt(val)})
        improved = val is not None and (best is None or val < best)
        if improved:
            best = val
        extra = {"train_config": cfg.to_dict(), "best_val_mse": best}
        save_checkpoint(ckdir / "last", ms, opt, step=opt.t, epoch=epoch + 1, extra=extra)
        if improved:
            save_checkpoint(ckdir / "best", ms, opt, step=opt.t, epoch=epoch + 1, extra=extra)
        write_history(hist_path, rows)
        if log:
            log(f"epoch {epoch + 1}/{cfg.epochs} step {opt.t} loss_rec {means[0]:.5f} "
                f"loss_pre {means[1]:.5f} val_mse {'-' if val is None else f'{val:.5f}'}")
    if not rows:
        write_history(hist_path, rows)
    return rows
