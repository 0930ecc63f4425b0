"""Matplotlib figures written next to the CSV outputs of the CLI (Agg backend, files only)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def plot_history(rows: list[dict], path) -> Path:
    epochs = [int(r["epoch"]) for r in rows]
    fig, ax = plt.subplots(1, 2, figsize=(9, 3.5))
    for key in ("loss_rec", "loss_pre", "total"):
        vals = [float(r[key]) for r in rows]
        if any(vals):
            ax[0].plot(epochs, vals, marker="o", label=key)
    ax[0].set_xlabel("epoch")
    ax[0].set_ylabel("training loss")
    ax[0].legend()
    val = [(e, float(r["val_mse"])) for e, r in zip(epochs, rows) if r["val_mse"] not in ("", None)]
    if val:
        ax[1].plot(*zip(*val), marker="o", color="tab:red")
    ax[1].set_xlabel("epoch")
    ax[1].set_ylabel("validation MSE")
    return _save(fig, path)


def plot_leadtime_metrics(report, path, metrics=("mse", "ssim", "psnr", "pcc")) -> Path:
    from .metrics import METRICS

    lead = np.arange(1, report.values.shape[1] + 1)
    fig, axes = plt.subplots(1, len(metrics), figsize=(3.2 * len(metrics), 3))
    for ax, m in zip(np.atleast_1d(axes), metrics):
        k = METRICS.index(m)
        for i, name in enumerate(report.variables):
            ax.plot(lead, report.values[i, :, k], marker=".", label=name)
        ax.set_xlabel("lead time")
        ax.set_title(m)
    np.atleast_1d(axes)[0].legend(fontsize=7)
    return _save(fig, path)


def plot_error_maps(report, path) -> Path:
    n, lead = report.abs_error.shape[:2]
    fig, axes = plt.subplots(n, lead, figsize=(1.3 * lead, 1.4 * n), squeeze=False)
    for i in range(n):
        vmax = report.dynamic_range[i]
        for t in range(lead):
            ax = axes[i, t]
            ax.imshow(report.abs_error[i, t], cmap="magma", vmin=0, vmax=vmax)
            ax.set_xticks([])
            ax.set_yticks([])
            if i == 0:
                ax.set_title(f"t+{t + 1}", fontsize=8)
        axes[i, 0].set_ylabel(report.variables[i], fontsize=8)
    return _save(fig, path)


def plot_cka(rows: list[dict], path) -> Path:
    fig, ax = plt.subplots(figsize=(7, 3.5))
    pairs = sorted({r["pair"] for r in rows})
    for pair in pairs:
        sel = [r for r in rows if r["pair"] == pair]
        ax.plot([int(r["layer_index"]) for r in sel], [float(r["cka"]) for r in sel], marker="o", label=pair)
    names = {int(r["layer_index"]): r["layer"] for r in rows}
    ax.set_xticks(sorted(names))
    ax.set_xticklabels([names[k] for k in sorted(names)], rotation=45, ha="right", fontsize=7)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("linear CKA")
    ax.legend(fontsize=7)
    return _save(fig, path)


def plot_distribution(report, path) -> Path:
    kinds = list(report.histograms) + [f"diff_{d.kind}" for d in report.differences]
    fig, axes = plt.subplots(1, len(kinds), figsize=(3 * len(kinds), 2.8))
    hists = {**report.histograms, **{f"diff_{d.kind}": (d.hist, d.edges) for d in report.differences}}
    for ax, kind in zip(np.atleast_1d(axes), kinds):
        counts, edges = hists[kind]
        ax.stairs(counts, edges, fill=True)
        ax.set_title(kind, fontsize=9)
    return _save(fig, path)


def plot_ablation(rows: list[dict], path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    names = [r["config"] for r in rows]
    means = [float(r["mean_mse"]) for r in rows]
    stds = [float(r["std_mse"]) for r in rows]
    ax.bar(names, means, yerr=stds, capsize=4, color="tab:blue")
    ax.set_ylabel("test MSE")
    lo = min(m - s for m, s in zip(means, stds))
    ax.set_ylim(max(0.0, lo * 0.95), None)
    return _save(fig, path)
