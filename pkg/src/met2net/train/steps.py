"""One optimization step in either training mode.

Two-stage mode (ordering kept exactly as the reference pseudocode lists it):

1. reconstruction stage: encoder and decoder are trained around the frozen
   shadow translator, ``loss_rec = mse(D(T_m(E(X))), Y)``;
2. shadow encoder/decoder take a momentum step toward the trained ones;
3. prediction stage: the trained translator maps shadow-encoded inputs onto
   shadow-encoded targets in latent space, ``loss_pre``;
4. shadow translator takes a momentum step;
5. one backward pass over the weighted sum, one Adam step over every
   trained parameter.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .. import diffcore as dc
from ..arch.model import ModuleSet, decode_all, encode_all, forward_end_to_end, translate
from ..diffcore import Adam, Tensor
from .config import TrainConfig
from .momentum import momentum_update


class NumericalError(RuntimeError):
    """A loss became NaN or infinite; ``stage`` names where."""

    def __init__(self, stage: str, value: float, step: int):
        super().__init__(f"non-finite loss in {stage} at step {step}: {value}")
        self.stage = stage
        self.value = value
        self.step = step


@dataclass
class StepReport:
    loss_rec: float
    loss_pre: float
    total: float
    step: int
    wall_time: float
    monitor_mse: float | None = None


@dataclass
class StageLosses:
    loss_rec: Tensor
    loss_pre: Tensor
    monitor: np.ndarray | None = None   # shadow-decoded stage-2 prediction, never part of a loss


def make_optimizer(ms: ModuleSet, cfg: TrainConfig) -> Adam:
    return Adam(ms.primary_parameters(), lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)


def _momentum(ms: ModuleSet, which: str, alpha: float):
    momentum_update(ms.group(which, shadow=True), ms.group(which), alpha)


def two_stage_losses(ms: ModuleSet, x, y, alpha: float, monitor: bool = False) -> StageLosses:
    """Forward both stages and apply both momentum updates; no backward."""
    x, y = dc.as_tensor(x), dc.as_tensor(y)

    zx = encode_all(ms, x)
    y_rec = decode_all(ms, translate(ms, zx, use_shadow=True))
    loss_rec = dc.mse(y_rec, y)

    _momentum(ms, "encoders", alpha)
    _momentum(ms, "decoders", alpha)

    with dc.no_grad():
        zx_m = encode_all(ms, x, use_shadow=True)
        zy = encode_all(ms, y, use_shadow=True)
    z_pred = translate(ms, zx_m)
    loss_pre = dc.mse(z_pred, zy)
    shown = None
    if monitor:
        with dc.no_grad():
            shown = decode_all(ms, z_pred.detach(), use_shadow=True).data

    _momentum(ms, "translator", alpha)
    return StageLosses(loss_rec, loss_pre, shown)


def _check_finite(value: float, stage: str, step: int):
    if not np.isfinite(value):
        raise NumericalError(stage, value, step)


def train_step(ms: ModuleSet, opt: Adam, x, y, cfg: TrainConfig) -> StepReport:
    """Two-stage update; see the module docstring for the exact ordering."""
    t0 = time.perf_counter()
    step = opt.t + 1
    losses = two_stage_losses(ms, x, y, cfg.alpha, monitor=cfg.monitor_decode)
    rec, pre = losses.loss_rec.item(), losses.loss_pre.item()
    _check_finite(rec, "reconstruction stage (loss_rec)", step)
    _check_finite(pre, "prediction stage (loss_pre)", step)
    total = losses.loss_rec * cfg.rec_weight + losses.loss_pre * cfg.pre_weight
    dc.backward(total)
    opt.step()
    monitor_mse = None
    if losses.monitor is not None:
        monitor_mse = float(np.mean((losses.monitor - np.asarray(dc.as_tensor(y).data)) ** 2))
    return StepReport(rec, pre, rec + pre, opt.t, time.perf_counter() - t0, monitor_mse)


def train_step_e2e(ms: ModuleSet, opt: Adam, x, y, cfg: TrainConfig) -> StepReport:
    """Plain end-to-end update of encoder, translator and decoder together."""
    t0 = time.perf_counter()
    step = opt.t + 1
    loss = dc.mse(forward_end_to_end(ms, x), dc.as_tensor(y))
    value = loss.item()
    _check_finite(value, "end-to-end forward (loss_rec)", step)
    dc.backward(loss * cfg.rec_weight)
    opt.step()
    return StepReport(value, 0.0, value, opt.t, time.perf_counter() - t0)
