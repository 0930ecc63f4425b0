"""Latent-space translator: attention across variables followed by spatiotemporal blocks."""

from __future__ import annotations

import math

import numpy as np

from .. import diffcore as dc
from ..diffcore import Module, Tensor
from .layers import Conv2d, GroupNorm


def attention_matrix(q: Tensor, k: Tensor) -> Tensor:
    """softmax(q k^T / sqrt(d)) over the last axis; q, k are [..., N, d]."""
    d = q.shape[-1]
    scores = dc.matmul(q, dc.permute(k, tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2)))
    return dc.softmax(scores * (1.0 / math.sqrt(d)), axis=-1)


class VariableAttention(Module):
    """Mixes the N variable tokens of each sample with an N x N attention matrix.

    Queries and keys are 1x1-conv projections of every token to ``latent_dim``
    channels; values keep the full token width and start as the identity map.
    The similarity of two tokens is the inner product of their flattened
    (channels x h x w) projections.
    """

    def __init__(self, rng, width, qk_dim, heads, dtype):
        self.heads = heads
        self.query = Conv2d(rng, width, qk_dim, 1, dtype=dtype, gain=1.0)
        self.key = Conv2d(rng, width, qk_dim, 1, dtype=dtype, gain=1.0)
        self.value = Conv2d(rng, width, width, 1, dtype=dtype)
        self.value.weight.data = np.eye(width, dtype=dtype).reshape(width, width, 1, 1)

    def _split(self, t: Tensor, B: int, N: int) -> Tensor:
        c, h, w = t.shape[1:]
        t = t.reshape(B, N, self.heads, (c // self.heads) * h * w)
        return t.permute(0, 2, 1, 3)

    def forward(self, z: Tensor, return_attention: bool = False):
        B, N, C, h, w = z.shape
        flat = z.reshape(B * N, C, h, w)
        q = self._split(self.query(flat), B, N)
        k = self._split(self.key(flat), B, N)
        v = self._split(self.value(flat), B, N)
        a = attention_matrix(q, k)                      # [B, heads, N, N]
        mixed = dc.matmul(a, v).permute(0, 2, 1, 3)     # [B, N, heads, Fv]
        out = mixed.reshape(B, N, C, h, w)
        if return_attention:
            return out, a
        return out


class SpatioTemporalBlock(Module):
    """Residual block over a [batch, width, h, w] token.

    Large-kernel static attention (5x5 depthwise -> 7x7 depthwise dilated by
    3 -> pointwise) multiplied by a squeeze-style channel gate, followed by a
    pointwise feed-forward. Both residual branches end in zero-initialized
    projections, so a fresh block is the identity.
    """

    def __init__(self, rng, width, cfg, dtype):
        g = cfg.norm_groups if width % cfg.norm_groups == 0 else 1
        hidden = max(1, width // cfg.gate_reduction)
        self.norm1 = GroupNorm(g, width, dtype)
        self.local = Conv2d(rng, width, width, 5, padding=2, groups=width, dtype=dtype)
        self.dilated = Conv2d(rng, width, width, 7, padding=9, dilation=3, groups=width, dtype=dtype)
        self.mix = Conv2d(rng, width, width, 1, dtype=dtype, gain=1.0)
        self.gate_in = Conv2d(rng, width, hidden, 1, dtype=dtype)
        self.gate_out = Conv2d(rng, hidden, width, 1, dtype=dtype, gain=1.0)
        self.proj = Conv2d(rng, width, width, 1, dtype=dtype, zero_init=True)
        self.norm2 = GroupNorm(g, width, dtype)
        self.ffn_in = Conv2d(rng, width, width * cfg.mlp_ratio, 1, dtype=dtype)
        self.ffn_out = Conv2d(rng, width * cfg.mlp_ratio, width, 1, dtype=dtype, zero_init=True)

    def forward(self, x: Tensor) -> Tensor:
        a = self.norm1(x)
        static = self.mix(self.dilated(self.local(a)))
        pooled = dc.mean(a, axis=(2, 3), keepdims=True)
        gate = dc.sigmoid(self.gate_out(dc.silu(self.gate_in(pooled))))
        x = x + self.proj(static * gate * a)
        return x + self.ffn_out(dc.silu(self.ffn_in(self.norm2(x))))


class Translator(Module):
    def __init__(self, rng, cfg, dtype):
        width_in = cfg.in_frames * cfg.latent_dim
        width_out = cfg.out_frames * cfg.latent_dim
        self.attention = (VariableAttention(rng, width_in, cfg.latent_dim, cfg.heads, dtype)
                          if cfg.variable_attention else None)
        self.time_map = (Conv2d(rng, width_in, width_out, 1, dtype=dtype, gain=1.0)
                         if width_in != width_out else None)
        self.blocks = [SpatioTemporalBlock(rng, width_out, cfg, dtype) for _ in range(cfg.translator_depth)]

    def forward(self, z: Tensor, probes=None) -> Tensor:
        if self.attention is not None:
            z = self.attention(z)
            if probes is not None:
                probes.append(("attention", z))
        B, N, C, h, w = z.shape
        x = z.reshape(B * N, C, h, w)
        if self.time_map is not None:
            x = self.time_map(x)
        for i, block in enumerate(self.blocks):
            x = block(x)
            if probes is not None:
                probes.append((f"block_{i}", x.reshape(B, N, x.shape[1], h, w)))
        return x.reshape(B, N, x.shape[1], h, w)
