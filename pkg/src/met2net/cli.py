"""Command-line entry point: ``met2net {gen,train,eval,predict,cka,analyze,ablate}``.

Exit codes: 0 success, 2 configuration error, 3 data or I/O error,
4 numerical abort. ``MET2NET_THREADS`` caps BLAS threads; 0 means a single
thread, which together with the serial convolution kernels makes every
command bitwise deterministic.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .arch import ConfigError, ModuleSet, forward_inference, probe_activations
from .config import RunConfig, load_run_config, parse_override
from .data import DataError, analyze_distribution, generate_mvm, load_dataset
from .metrics import (MetricError, evaluate, linear_cka, write_error_heatmaps, write_metrics_csv,
                      write_summary_csv)
from .train import (CheckpointError, ConfigMismatch, NumericalError, fit, load_checkpoint,
                    restore)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _say(msg: str) -> None:
    print(msg, flush=True)


def configure_threads(env=None) -> int | None:
    env = os.environ if env is None else env
    raw = env.get("MET2NET_THREADS")
    if raw is None or raw == "":
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"MET2NET_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ConfigError("MET2NET_THREADS must be >= 0")
    from threadpoolctl import threadpool_limits

    threadpool_limits(max(n, 1))
    return n


def _versions() -> dict:
    import matplotlib
    import numba

    return {"met2net": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "numba": numba.__version__, "matplotlib": matplotlib.__version__, "platform": platform.platform()}


def _echo(out: Path, cfg: RunConfig, command: str):
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1))
    (out / "versions.json").write_text(json.dumps({**_versions(), "command": command}, indent=1))


def _check_dataset(cfg: RunConfig, ds) -> None:
    m = cfg.model_config()
    have = (ds.n_vars, ds.channels_per_var, ds.in_frames, ds.out_frames, ds.height, ds.width)
    want = (m.n_vars, m.channels_per_var, m.in_frames, m.out_frames, m.height, m.width)
    if have != want:
        raise ConfigError(f"dataset dims (n_vars, channels, T, T', H, W) = {have} do not match model {want}")


def _locate_checkpoint(path) -> Path:
    p = Path(path)
    if (p / "manifest.json").is_file():
        return p
    for sub in ("checkpoints/best", "checkpoints/last"):
        if (p / sub / "manifest.json").is_file():
            return p / sub
    raise DataError(f"no checkpoint found at {p}")


def _run_dir_of(ckpt_dir: Path) -> Path:
    return ckpt_dir.parent.parent if ckpt_dir.parent.name == "checkpoints" else ckpt_dir.parent


def _load_model(cfg: RunConfig, ckpt_path) -> ModuleSet:
    ckpt_dir = _locate_checkpoint(ckpt_path)
    ckpt = load_checkpoint(ckpt_dir)
    ms = ModuleSet(cfg.model_config(), seed=0)
    restore(ckpt, ms)
    return ms


def _config_for(args, ckpt_path=None) -> RunConfig:
    overrides = [parse_override(o) for o in args.override]
    if args.seed is not None:
        overrides.append(("train.seed", args.seed))
    path = args.config
    if path is None and ckpt_path is not None:
        echo = _run_dir_of(_locate_checkpoint(ckpt_path)) / "config.json"
        if echo.is_file():
            path = echo
    return load_run_config(path, overrides)


# -- commands -----------------------------------------------------------------------------------

def cmd_gen(args) -> int:
    overrides = [parse_override(o) for o in args.override]
    if args.seed is not None:
        overrides.append(("data.scene.seed", args.seed))
    cfg = load_run_config(args.config, overrides)
    out = Path(args.out or cfg.data.path)
    scene = cfg.data.scene_config()
    manifest = generate_mvm(scene, out)
    nbytes = sum(p.stat().st_size for p in out.glob("*.bin"))
    counts = ", ".join(f"{k}={v['samples']}" for k, v in manifest["splits"].items())
    _say(f"wrote {out}: samples {counts}; {nbytes} bytes; seed {scene.seed}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config_for(args)
    if not args.out:
        raise UsageError("train needs --out <run directory>")
    out = Path(args.out)
    ds = load_dataset(cfg.data.path)
    _check_dataset(cfg, ds)
    tcfg = cfg.train_config()
    _echo(out, cfg, "train")
    ms = ModuleSet(cfg.model_config(), seed=tcfg.seed)
    mode = "two-stage" if tcfg.its_enabled else "end-to-end"
    _say(f"training ({mode}) for {tcfg.epochs} epochs, {ms.inference_parameter_count()} inference parameters")
    rows = fit(ms, ds, tcfg, out, resume=args.resume, log=_say)
    if rows and cfg.eval.figures:
        from .plots import plot_history

        plot_history(rows, out / "history.png")
    _say(f"history: {out / 'history.csv'}")
    return EXIT_OK


def _predictor(ms):
    return lambda x: forward_inference(ms, x)


def cmd_eval(args) -> int:
    ckpt = args.checkpoint or args.out
    if not ckpt:
        raise UsageError("eval needs --checkpoint (a checkpoint or run directory)")
    cfg = _config_for(args, ckpt)
    split = args.split or cfg.eval.split
    ds = load_dataset(cfg.data.path)
    _check_dataset(cfg, ds)
    ms = _load_model(cfg, ckpt)
    ckpt_dir = _locate_checkpoint(ckpt)
    out = Path(args.out) if args.out and args.checkpoint else _run_dir_of(ckpt_dir) / f"eval_{split}"
    out.mkdir(parents=True, exist_ok=True)
    report = evaluate(_predictor(ms), ds, split, cfg.eval.batch_size, cfg.eval.limit or None,
                      cfg.eval.dynamic_range)
    write_metrics_csv(report, out / "metrics.csv")
    write_summary_csv(report, out / "metrics_summary.csv")
    if cfg.eval.heatmaps:
        write_error_heatmaps(report, out / "heatmaps")
    if cfg.eval.figures:
        from .plots import plot_error_maps, plot_leadtime_metrics

        plot_leadtime_metrics(report, out / "metrics_by_leadtime.png")
        plot_error_maps(report, out / "abs_error.png")
    for i, name in enumerate(report.variables):
        _say(f"{name}: mse {report.get(i, 'mse'):.6g} mae {report.get(i, 'mae'):.6g} "
             f"ssim {report.get(i, 'ssim'):.4f} psnr {report.get(i, 'psnr'):.2f}")
    _say(f"{report.samples} samples from {split!r}; metrics in {out}")
    return EXIT_OK


def cmd_predict(args) -> int:
    ckpt = args.checkpoint
    if not ckpt:
        raise UsageError("predict needs --checkpoint")
    cfg = _config_for(args, ckpt)
    split = args.split or cfg.eval.split
    ds = load_dataset(cfg.data.path)
    _check_dataset(cfg, ds)
    ms = _load_model(cfg, ckpt)
    out = Path(args.out or _run_dir_of(_locate_checkpoint(ckpt)) / "predictions")
    out.mkdir(parents=True, exist_ok=True)
    blob = out / f"{split}_predictions.bin"
    n = 0
    with open(blob, "wb") as fh:
        for x, _, ix in ds.batches(split, cfg.eval.batch_size, limit=cfg.eval.limit or None):
            fh.write(ds.denormalize(forward_inference(ms, x)).astype("<f4").tobytes())
            n += len(ix)
    shape = [n, ds.out_frames, ds.n_vars, ds.channels, ds.height, ds.width]
    (out / f"{split}_predictions.json").write_text(json.dumps(
        {"split": split, "shape": shape, "dtype": "f32", "layout": "sample,T',N,C,H,W", "units": "physical",
         "variables": ds.variables, "checkpoint": str(_locate_checkpoint(ckpt))}, indent=1))
    _say(f"wrote {blob} with shape {shape}")
    return EXIT_OK


def _layer_activations(ms, ds, split, n, batch_size, layer):
    parts = []
    for x, _, _ in ds.batches(split, batch_size, limit=n):
        acts = dict(probe_activations(ms, x))
        parts.append(acts[layer].astype(np.float32))
    return np.concatenate(parts)


def cka_rows(models: list, ds, split: str, n: int, batch_size: int, variables=(0, 1)) -> list[dict]:
    """Layerwise linear CKA: between two variables of one model, or per variable between two models."""
    x0, _, _ = next(ds.batches(split, 1))
    names = [[name for name, _ in probe_activations(m, x0)] for m in models]
    if len(models) == 2 and names[0] != names[1]:
        raise ConfigError(f"probe points differ between the models: {names[0]} vs {names[1]}")
    n = min(n, ds.n_samples(split))
    rows = []
    for li, layer in enumerate(names[0]):
        acts = [_layer_activations(m, ds, split, n, batch_size, layer) for m in models]
        if len(models) == 1:
            a, b = variables
            pairs = [(f"{ds.variables[a]}~{ds.variables[b]}", acts[0][:, a], acts[0][:, b])]
        else:
            pairs = [(f"A~B:{ds.variables[v]}", acts[0][:, v], acts[1][:, v]) for v in range(ds.n_vars)]
        for pair, xa, xb in pairs:
            rows.append({"layer_index": li, "layer": layer, "pair": pair, "cka": linear_cka(xa, xb)})
    return rows


def cmd_cka(args) -> int:
    if not args.checkpoint:
        raise UsageError("cka needs --checkpoint (and optionally --checkpoint-b)")
    cfg = _config_for(args, args.checkpoint)
    split = args.split or cfg.eval.split
    ds = load_dataset(cfg.data.path)
    models = [_load_model(cfg, args.checkpoint)]
    if args.checkpoint_b:
        cfg_b = _config_for(argparse.Namespace(**{**vars(args), "config": None}), args.checkpoint_b) \
            if args.config is None else cfg
        models.append(_load_model(cfg_b, args.checkpoint_b))
    for v in cfg.eval.cka_variables:
        if not 0 <= v < ds.n_vars:
            raise ConfigError(f"eval.cka_variables index {v} out of range for {ds.n_vars} variables")
    rows = cka_rows(models, ds, split, cfg.eval.cka_samples, cfg.eval.batch_size, tuple(cfg.eval.cka_variables))
    out = Path(args.out or _run_dir_of(_locate_checkpoint(args.checkpoint)) / "cka")
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "cka.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["layer_index", "layer", "pair", "cka"])
        w.writeheader()
        for r in rows:
            w.writerow({**r, "cka": repr(r["cka"])})
    if cfg.eval.figures:
        from .plots import plot_cka

        plot_cka(rows, out / "cka.png")
    _say(f"wrote {out / 'cka.csv'} ({len(rows)} rows)")
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = _config_for(args)
    ds = load_dataset(cfg.data.path)
    variable = args.variable or ds.variables[0]
    if variable not in ds.variables:
        raise ConfigError(f"unknown variable {variable!r}; dataset has {ds.variables}")
    e = cfg.eval
    rep = analyze_distribution(ds, variable, split=e.analyze_split, role=e.analyze_role, sample=e.analyze_sample,
                               frame=e.analyze_frame, point=tuple(e.analyze_point) if e.analyze_point else None,
                               bins=e.bins, max_samples=e.analyze_samples or None)
    out = Path(args.out or "analysis")
    paths = rep.write_csv(out, prefix=f"{variable}_")
    if e.figures:
        from .plots import plot_distribution

        paths.append(plot_distribution(rep, out / f"{variable}_distribution.png"))
    for d in rep.differences:
        _say(f"{variable} {d.kind} difference: mean {d.raw_mean:.6g} std {d.raw_std:.6g} "
             f"retained {d.n_retained}/{d.n_total}")
    _say("wrote " + ", ".join(str(p) for p in paths))
    return EXIT_OK


def cmd_ablate(args) -> int:
    from .experiments import AblationSettings, default_ablation_dir, run_ablation, write_ablation_csv

    overrides = [parse_override(o) for o in args.override]
    settings = AblationSettings()
    for key, value in overrides:
        if not hasattr(settings, key):
            raise ConfigError(f"unknown ablation setting {key!r}")
        setattr(settings, key, value)
    out = Path(args.out) if args.out else default_ablation_dir()
    rows = run_ablation(out, settings, log=_say)
    write_ablation_csv(rows, out / "ablation.csv")
    from .plots import plot_ablation

    plot_ablation(rows, out / "ablation.png")
    for r in rows:
        _say(f"{r['config']:>9}: test MSE {r['mean_mse']:.6f} +- {r['std_mse']:.6f}")
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "predict": cmd_predict, "cka": cmd_cka,
            "analyze": cmd_analyze, "ablate": cmd_ablate}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config")
    common.add_argument("--seed", type=int, help="overrides train.seed (data.scene.seed for gen)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--resume", action="store_true", help="train: continue from <out>/checkpoints/last")
    common.add_argument("-o", "--set", dest="override", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted config override, e.g. -o train.lr=0.0005 (repeatable)")
    common.add_argument("--checkpoint", help="checkpoint directory or run directory")
    common.add_argument("--checkpoint-b", help="cka: second checkpoint to compare against")
    common.add_argument("--split", help="dataset split (default eval.split)")
    common.add_argument("--variable", help="analyze: variable name")
    p = argparse.ArgumentParser(prog="met2net", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"met2net {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {"gen": "generate the moving-sprites dataset", "train": "train a model",
             "eval": "metrics, heatmaps and figures for a checkpoint", "predict": "write raw prediction blobs",
             "cka": "layerwise CKA between variables or checkpoints", "analyze": "distribution analysis",
             "ablate": "run the four-row ablation sweep"}
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        configure_threads()
        return COMMANDS[args.command](args)
    except (ConfigError, ConfigMismatch, UsageError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, MetricError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, CheckpointError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
