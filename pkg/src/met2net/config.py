"""Run configuration: one JSON document with sections model, train, data, eval and ablation.

Unknown keys are rejected everywhere. The ablation section is the only
place the three method switches are set: ``med`` (one encoder/decoder per
variable), ``va`` (attention across variables) and ``its`` (two-stage
training with momentum shadows); the corresponding model/train fields are
derived from it.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .arch.config import ConfigError, ModelConfig
from .data.mvm import SpriteSceneConfig
from .train.config import TrainConfig

_DERIVED = {"model": {"multi_encoder_decoder", "variable_attention"}, "train": {"its_enabled"}}


@dataclass
class DataSection:
    path: str = "data"                 # dataset directory (written by gen, read by everything else)
    scene: dict = field(default_factory=dict)   # SpriteSceneConfig overrides for gen

    def scene_config(self) -> SpriteSceneConfig:
        return _build(SpriteSceneConfig, self.scene, "data.scene")


@dataclass
class EvalSection:
    split: str = "test"
    batch_size: int = 16
    limit: int = 0                     # 0 = whole split
    dynamic_range: float | list | None = None   # None = training-split value range per variable
    heatmaps: bool = True
    figures: bool = True
    cka_samples: int = 512
    cka_variables: list = field(default_factory=lambda: [0, 1])
    analyze_split: str = "train"
    analyze_role: str = "inputs"
    analyze_sample: int = 0
    analyze_frame: int = 0
    analyze_point: list | None = None
    analyze_samples: int = 0           # 0 = all samples for the point series
    bins: int = 50

    def validate(self):
        if self.batch_size < 1 or self.limit < 0 or self.bins < 1:
            raise ConfigError("eval.batch_size and eval.bins must be >= 1, eval.limit >= 0")
        if not 2 <= self.cka_samples <= 512:
            raise ConfigError("eval.cka_samples must lie in [2, 512]")
        if len(self.cka_variables) != 2:
            raise ConfigError("eval.cka_variables must name exactly two variable indices")
        if self.analyze_role not in ("inputs", "targets"):
            raise ConfigError("eval.analyze_role must be 'inputs' or 'targets'")


@dataclass
class AblationSection:
    med: bool = True
    va: bool = True
    its: bool = True


def _build(cls, values: dict, where: str):
    if not isinstance(values, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    try:
        obj = cls(**values)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    if hasattr(obj, "validate"):
        obj.validate()
    return obj


@dataclass
class RunConfig:
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    data: DataSection = field(default_factory=DataSection)
    eval: EvalSection = field(default_factory=EvalSection)
    ablation: AblationSection = field(default_factory=AblationSection)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        unknown = sorted(set(raw) - {"model", "train", "data", "eval", "ablation"})
        if unknown:
            raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")
        for section, keys in _DERIVED.items():
            clash = sorted(keys & set(raw.get(section, {}) or {}))
            if clash:
                raise ConfigError(f"{section}.{clash[0]} is set through the ablation section (med/va/its)")
        cfg = cls(model=dict(raw.get("model", {})), train=dict(raw.get("train", {})),
                  data=_build(DataSection, raw.get("data", {}), "data"),
                  eval=_build(EvalSection, raw.get("eval", {}), "eval"),
                  ablation=_build(AblationSection, raw.get("ablation", {}), "ablation"))
        cfg.model_config()
        cfg.train_config()
        cfg.data.scene_config()
        return cfg

    def model_config(self) -> ModelConfig:
        values = {**self.model, "multi_encoder_decoder": self.ablation.med,
                  "variable_attention": self.ablation.va}
        return _build(ModelConfig, values, "model")

    def train_config(self) -> TrainConfig:
        return _build(TrainConfig, {**self.train, "its_enabled": self.ablation.its}, "train")

    def to_dict(self) -> dict:
        """Fully resolved config (defaults filled in), suitable for echoing into a run directory."""
        model = self.model_config().to_dict()
        train = self.train_config().to_dict()
        for k in _DERIVED["model"]:
            model.pop(k)
        train.pop("its_enabled")
        return {"model": model, "train": train,
                "data": {"path": self.data.path, "scene": self.data.scene_config().to_dict()},
                "eval": asdict(self.eval), "ablation": asdict(self.ablation)}


def apply_override(raw: dict, dotted: str, value) -> None:
    """Set ``raw[a][b][c] = value`` for ``dotted = 'a.b.c'``, creating objects on the way."""
    parts = dotted.split(".")
    if not all(parts):
        raise ConfigError(f"bad override key {dotted!r}")
    node = raw
    for p in parts[:-1]:
        nxt = node.setdefault(p, {})
        if not isinstance(nxt, dict):
            raise ConfigError(f"override {dotted!r}: {p!r} is not a section")
        node = nxt
    node[parts[-1]] = value


def parse_override(text: str) -> tuple[str, object]:
    """'train.lr=0.001' -> ('train.lr', 0.001); values are JSON when they parse, else strings."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like section.key=value")
    key, val = text.split("=", 1)
    try:
        return key.strip(), json.loads(val)
    except json.JSONDecodeError:
        return key.strip(), val


def load_run_config(path=None, overrides=()) -> RunConfig:
    raw: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    raw = copy.deepcopy(raw)
    for key, value in overrides:
        apply_override(raw, key, value)
    return RunConfig.from_dict(raw)
