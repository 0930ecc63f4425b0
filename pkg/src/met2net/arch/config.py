from __future__ import annotations

from dataclasses import asdict, dataclass, field


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


@dataclass
class ModelConfig:
    """Architecture hyperparameters.

    ``latent_dim`` is the number of channels each frame is compressed to and
    ``down_factor`` the number of stride-2 encoder stages, so the latent grid
    is (height / 2**down_factor, width / 2**down_factor).
    """

    n_vars: int = 3
    channels_per_var: list = field(default_factory=lambda: [1, 1, 1])
    in_frames: int = 10
    out_frames: int = 10
    height: int = 64
    width: int = 64
    latent_dim: int = 8
    down_factor: int = 2
    enc_depth: int = 2
    translator_depth: int = 2
    heads: int = 1
    mlp_ratio: int = 2
    gate_reduction: int = 4
    norm_groups: int = 2
    multi_encoder_decoder: bool = True
    variable_attention: bool = True
    inference_use_shadow: bool = False
    dtype: str = "f32"

    def __post_init__(self):
        self.channels_per_var = [int(c) for c in self.channels_per_var]
        self.validate()

    def validate(self):
        if self.n_vars < 1:
            raise ConfigError("n_vars must be >= 1")
        if len(self.channels_per_var) != self.n_vars:
            raise ConfigError(f"channels_per_var has {len(self.channels_per_var)} entries for {self.n_vars} variables")
        if any(c < 1 for c in self.channels_per_var):
            raise ConfigError("every variable needs at least one channel")
        if self.in_frames < 1 or self.out_frames < 1:
            raise ConfigError("in_frames and out_frames must be >= 1")
        if self.down_factor < 0 or self.enc_depth < max(1, self.down_factor):
            raise ConfigError(f"enc_depth={self.enc_depth} must be >= max(1, down_factor={self.down_factor})")
        scale = 2 ** self.down_factor
        if self.height % scale or self.width % scale:
            raise ConfigError(f"grid {self.height}x{self.width} not divisible by 2**{self.down_factor}")
        if self.latent_dim < 1 or self.latent_dim % self.norm_groups:
            raise ConfigError(f"latent_dim={self.latent_dim} must be a positive multiple of norm_groups={self.norm_groups}")
        if self.heads < 1 or self.latent_dim % self.heads or self.in_frames * self.latent_dim % self.heads:
            raise ConfigError(f"heads={self.heads} must divide latent_dim and in_frames*latent_dim")
        if self.translator_depth < 0:
            raise ConfigError("translator_depth must be >= 0")
        if not self.multi_encoder_decoder and len(set(self.channels_per_var)) != 1:
            raise ConfigError("a shared encoder/decoder needs equal channel counts per variable")
        if self.dtype not in ("f32", "f64"):
            raise ConfigError(f"dtype must be f32 or f64, got {self.dtype!r}")

    @property
    def latent_height(self) -> int:
        return self.height // 2 ** self.down_factor

    @property
    def latent_width(self) -> int:
        return self.width // 2 ** self.down_factor

    @property
    def max_channels(self) -> int:
        return max(self.channels_per_var)

    def to_dict(self) -> dict:
        return asdict(self)
