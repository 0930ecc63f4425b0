"""Building blocks: convolution/normalization layers and the per-variable encoder and decoder."""

from __future__ import annotations

import numpy as np

from .. import diffcore as dc
from ..diffcore import Module, Parameter, Tensor


class Conv2d(Module):
    def __init__(self, rng, cin, cout, k, stride=1, padding=0, dilation=1, groups=1,
                 dtype=np.float32, zero_init=False, gain=2.0):
        fan_in = (cin // groups) * k * k
        shape = (cout, cin // groups, k, k)
        w = np.zeros(shape, dtype) if zero_init else dc.kaiming_normal(rng, shape, fan_in, dtype, gain)
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(cout, dtype))
        self.stride, self.padding, self.dilation, self.groups = stride, padding, dilation, groups

    def forward(self, x: Tensor) -> Tensor:
        return dc.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.dilation, self.groups)


class GroupNorm(Module):
    def __init__(self, groups, channels, dtype=np.float32, eps=1e-5):
        self.gamma = Parameter(np.ones(channels, dtype))
        self.beta = Parameter(np.zeros(channels, dtype))
        self.groups, self.eps = groups, eps

    def forward(self, x):
        return dc.group_norm(x, self.groups, self.gamma, self.beta, self.eps)


class ConvStage(Module):
    """3x3 conv, group norm, SiLU."""

    def __init__(self, rng, cin, cout, stride, groups, dtype, upsample=False):
        self.upsample = upsample
        self.conv = Conv2d(rng, cin, cout, 3, stride=stride, padding=1, dtype=dtype)
        self.norm = GroupNorm(groups, cout, dtype)

    def forward(self, x):
        if self.upsample:
            x = dc.upsample_nearest(x, 2)
        return dc.silu(self.norm(self.conv(x)))


class Encoder(Module):
    """Frame-wise spatial compressor: [frames, C, H, W] -> [frames, D, H/2^s, W/2^s].

    The first ``down_factor`` stages use stride 2, any further stages stride 1.
    """

    def __init__(self, rng, in_channels, cfg, dtype):
        d = cfg.latent_dim
        self.stages = [
            ConvStage(rng, in_channels if k == 0 else d, d, 2 if k < cfg.down_factor else 1,
                      cfg.norm_groups, dtype)
            for k in range(cfg.enc_depth)
        ]

    def forward(self, x, probes=None):
        for stage in self.stages:
            x = stage(x)
            if probes is not None:
                probes.append(x)
        return x


class Decoder(Module):
    """Mirror of the encoder built from nearest-upsample + conv stages.

    The last stage maps to the variable's channel count with no activation,
    since targets are standardized.
    """

    def __init__(self, rng, out_channels, cfg, dtype):
        d = cfg.latent_dim
        depth = cfg.enc_depth
        first_up = depth - cfg.down_factor
        self.stages = [
            ConvStage(rng, d, d, 1, cfg.norm_groups, dtype, upsample=k >= first_up)
            for k in range(depth - 1)
        ]
        self.final_upsample = depth - 1 >= first_up
        self.head = Conv2d(rng, d, out_channels, 3, padding=1, dtype=dtype, gain=1.0)

    def forward(self, x, probes=None):
        for stage in self.stages:
            x = stage(x)
            if probes is not None:
                probes.append(x)
        if self.final_upsample:
            x = dc.upsample_nearest(x, 2)
        return self.head(x)
