from __future__ import annotations

from dataclasses import asdict, dataclass

from ..arch.config import ConfigError


@dataclass
class TrainConfig:
    """Optimization schedule and the two-stage switches.

    ``alpha`` is the momentum coefficient of the shadow twins: 1 freezes
    them, 0 makes them hard copies of the trained modules.
    """

    alpha: float = 0.999
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 16
    epochs: int = 50
    seed: int = 0
    its_enabled: bool = True
    rec_weight: float = 1.0
    pre_weight: float = 1.0
    monitor_decode: bool = False   # decode the stage-2 latent through the shadow decoder for logging
    val_every: int = 1             # epochs between validations; 0 disables validation
    val_samples: int = 0           # 0 means the whole validation split

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.lr <= 0 or self.eps <= 0:
            raise ConfigError("lr and eps must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("Adam betas must lie in [0, 1)")
        if self.rec_weight < 0 or self.pre_weight < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.val_every < 0 or self.val_samples < 0:
            raise ConfigError("val_every and val_samples must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)
