"""Encoder/translator/decoder set with momentum shadow twins, and the composed passes."""

from __future__ import annotations

import numpy as np

from .. import diffcore as dc
from ..diffcore import DTYPES, Module, Parameter, ShapeError, Tensor
from .config import ModelConfig
from .layers import Decoder, Encoder
from .translator import Translator


class _Twin(Module):
    def __init__(self, encoders, decoders, translator):
        self.encoders = encoders
        self.decoders = decoders
        self.translator = translator


class ModuleSet(Module):
    """Trainable modules plus frozen copies that only ever change by momentum updates.

    With ``multi_encoder_decoder`` on there is one encoder/decoder pair per
    variable; otherwise a single pair is shared by all variables.
    """

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        dtype = DTYPES[cfg.dtype]
        rng = np.random.default_rng(seed)
        n_pairs = cfg.n_vars if cfg.multi_encoder_decoder else 1
        self.encoders = [Encoder(rng, cfg.channels_per_var[i], cfg, dtype) for i in range(n_pairs)]
        self.decoders = [Decoder(rng, cfg.channels_per_var[i], cfg, dtype) for i in range(n_pairs)]
        self.translator = Translator(rng, cfg, dtype)
        self.shadow = _Twin([e.clone() for e in self.encoders], [d.clone() for d in self.decoders],
                            self.translator.clone())
        self.shadow.set_trainable(False)
        self.assign_paths()

    def named_parameters(self, prefix: str = ""):
        for name in ("encoders", "decoders", "translator", "shadow"):
            yield from _walk_attr(getattr(self, name), f"{prefix}{name}")

    def primary_parameters(self) -> list[Parameter]:
        return [p for path, p in self.named_parameters() if not path.startswith("shadow.")]

    def shadow_parameters(self) -> list[Parameter]:
        return self.shadow.parameters()

    def group(self, which: str, shadow: bool = False) -> list[Parameter]:
        """Parameters of 'encoders', 'decoders' or 'translator' (primary or shadow)."""
        owner = self.shadow if shadow else self
        return _collect(getattr(owner, which))

    def inference_parameter_count(self) -> int:
        return int(sum(p.size for p in self.primary_parameters()))


def _walk_attr(value, path):
    from ..diffcore.module import _walk
    yield from _walk(value, path)


def _collect(value) -> list[Parameter]:
    return [p for _, p in _walk_attr(value, "x")]


def _check_input(cfg: ModelConfig, x: Tensor):
    expect = (cfg.n_vars, cfg.max_channels, cfg.height, cfg.width)
    if x.ndim != 6 or tuple(x.shape[2:]) != expect:
        raise ShapeError(f"input has shape {tuple(x.shape)}, expected [B, T, {', '.join(map(str, expect))}]")


def encode_all(ms: ModuleSet, x, use_shadow: bool = False, probes=None) -> Tensor:
    """[B, T, N, C, H, W] -> latent tokens [B, N, T*D, h, w]."""
    cfg = ms.cfg
    x = dc.as_tensor(x)
    _check_input(cfg, x)
    encoders = ms.shadow.encoders if use_shadow else ms.encoders
    B, T, N, C, H, W = x.shape
    if cfg.multi_encoder_decoder:
        tokens = []
        stage_probes = [] if probes is not None else None
        for i, enc in enumerate(encoders):
            ci = cfg.channels_per_var[i]
            xi = x[:, :, i, :ci].reshape(B * T, ci, H, W)
            local = [] if probes is not None else None
            zi = enc(xi, local)
            if probes is not None:
                stage_probes.append(local)
            tokens.append(_frames_to_token(zi, B, T))
        z = dc.stack(tokens, axis=1)
        if probes is not None:
            for k in range(len(stage_probes[0])):
                per_var = [_frames_to_token(stage_probes[i][k], B, T) for i in range(N)]
                probes.append((f"encoder_stage_{k}", dc.stack(per_var, axis=1)))
    else:
        folded = x.permute(0, 2, 1, 3, 4, 5).reshape(B * N * T, C, H, W)
        local = [] if probes is not None else None
        zf = encoders[0](folded, local)
        z = zf.reshape(B, N, T * zf.shape[1], zf.shape[2], zf.shape[3])
        if probes is not None:
            for k, t in enumerate(local):
                probes.append((f"encoder_stage_{k}", t.reshape(B, N, T * t.shape[1], t.shape[2], t.shape[3])))
    if probes is not None:
        probes.append(("latent", z))
    return z


def _frames_to_token(t: Tensor, B: int, T: int) -> Tensor:
    return t.reshape(B, T * t.shape[1], t.shape[2], t.shape[3])


def variable_attention(ms: ModuleSet, z: Tensor, use_shadow: bool = False):
    """Return (mixed tokens, attention [B, heads, N, N]); requires the VA flag."""
    tr = ms.shadow.translator if use_shadow else ms.translator
    if tr.attention is None:
        raise ValueError("model was built without variable attention")
    return tr.attention(z, return_attention=True)


def translate(ms: ModuleSet, z: Tensor, use_shadow: bool = False, probes=None) -> Tensor:
    tr = ms.shadow.translator if use_shadow else ms.translator
    cfg = ms.cfg
    expect = (cfg.n_vars, cfg.in_frames * cfg.latent_dim, cfg.latent_height, cfg.latent_width)
    if z.ndim != 5 or tuple(z.shape[1:]) != expect:
        raise ShapeError(f"latent has shape {tuple(z.shape)}, expected [B, {', '.join(map(str, expect))}]")
    return tr(z, probes)


def decode_all(ms: ModuleSet, z: Tensor, use_shadow: bool = False, probes=None) -> Tensor:
    """Latent tokens [B, N, T'*D, h, w] -> fields [B, T', N, C, H, W]."""
    cfg = ms.cfg
    decoders = ms.shadow.decoders if use_shadow else ms.decoders
    B, N, CT, h, w = z.shape
    D = cfg.latent_dim
    if N != cfg.n_vars or CT % D or (h, w) != (cfg.latent_height, cfg.latent_width):
        raise ShapeError(f"decoder input has shape {tuple(z.shape)}, incompatible with config")
    T = CT // D
    H, W, cmax = cfg.height, cfg.width, cfg.max_channels
    if cfg.multi_encoder_decoder:
        outs = []
        stage_probes = []
        for i, dec in enumerate(decoders):
            ci = cfg.channels_per_var[i]
            local = [] if probes is not None else None
            yi = dec(z[:, i].reshape(B * T, D, h, w), local)
            stage_probes.append(local)
            yi = yi.reshape(B, T, ci, H, W)
            if ci < cmax:
                pad = Tensor(np.zeros((B, T, cmax - ci, H, W), dtype=yi.dtype))
                yi = dc.concat([yi, pad], axis=2)
            outs.append(yi)
        y = dc.stack(outs, axis=2)
        if probes is not None:
            for k in range(len(stage_probes[0])):
                per_var = [_frames_to_token(stage_probes[i][k], B, T) for i in range(N)]
                probes.append((f"decoder_stage_{k}", dc.stack(per_var, axis=1)))
    else:
        local = [] if probes is not None else None
        yf = decoders[0](z.reshape(B * N * T, D, h, w), local)
        y = yf.reshape(B, N, T, cmax, H, W).permute(0, 2, 1, 3, 4, 5)
        if probes is not None:
            for k, t in enumerate(local):
                probes.append((f"decoder_stage_{k}", t.reshape(B, N, T * t.shape[1], t.shape[2], t.shape[3])))
    return y


def forward_end_to_end(ms: ModuleSet, x, use_shadow: bool = False) -> Tensor:
    """decode(translate(encode(x))) with a single module family, taped as usual."""
    z = encode_all(ms, x, use_shadow)
    return decode_all(ms, translate(ms, z, use_shadow), use_shadow)


def forward_inference(ms: ModuleSet, x) -> np.ndarray:
    """Prediction with the gradient-trained modules (shadows only if configured)."""
    with dc.no_grad():
        return forward_end_to_end(ms, x, ms.cfg.inference_use_shadow).data


def probe_activations(ms: ModuleSet, x, use_shadow: bool = False) -> list[tuple[str, np.ndarray]]:
    """Named per-variable activations [B, N, features] along the inference path."""
    probes: list = []
    with dc.no_grad():
        z = encode_all(ms, x, use_shadow, probes)
        z = translate(ms, z, use_shadow, probes)
        probes.append(("translator_output", z))
        decode_all(ms, z, use_shadow, probes)
    out = []
    for name, t in probes:
        arr = t.data
        out.append((name, arr.reshape(arr.shape[0], arr.shape[1], -1)))
    return out
