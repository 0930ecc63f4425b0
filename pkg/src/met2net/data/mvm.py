"""Multivariate moving-sprites scenes.

Every sample has three variables on one canvas. Variable 1 shows stroke
glyphs, variable 2 shows filled polygons at exactly the same positions, and
variable 3 is the photographic negative of variable 1. Sprites move at
constant speed and bounce elastically off the canvas edges.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..arch.config import ConfigError
from .sprites import PROCEDURAL, DataError, center_by_bbox, read_idx_images

SPLIT_CODES = {"train": 0, "test": 1}
VARIABLES = ["strokes", "polygons", "strokes_inverted"]


@dataclass
class SpriteSceneConfig:
    canvas: int = 64
    n_channels: int = 3
    n_sprites: int = 2
    in_frames: int = 10
    out_frames: int = 10
    n_train: int = 10000
    n_test: int = 10000
    source: str = "procedural"      # or "idx"
    idx_a: str | None = None        # IDX image file for variable 1 (e.g. digits)
    idx_b: str | None = None        # IDX image file for variable 2 (e.g. clothing)
    speed_range: list = field(default_factory=lambda: [2.0, 5.0])   # pixels per frame
    sprite_size: int = 28
    seed: int = 0

    def __post_init__(self):
        self.speed_range = [float(v) for v in self.speed_range]
        self.validate()

    def validate(self):
        if self.n_channels != 3:
            raise ConfigError("the scene has exactly three variables (n_channels=3)")
        if self.canvas <= self.sprite_size or self.sprite_size < 4:
            raise ConfigError(f"sprite_size={self.sprite_size} must be >= 4 and smaller than canvas={self.canvas}")
        if self.n_sprites < 1 or self.in_frames < 1 or self.out_frames < 1:
            raise ConfigError("n_sprites, in_frames and out_frames must be >= 1")
        if self.n_train < 0 or self.n_test < 0:
            raise ConfigError("sample counts must be >= 0")
        lo, hi = self.speed_range
        if not 0 <= lo <= hi:
            raise ConfigError(f"speed_range must satisfy 0 <= min <= max, got {self.speed_range}")
        if self.source not in ("procedural", "idx"):
            raise ConfigError(f"source must be 'procedural' or 'idx', got {self.source!r}")
        if self.source == "idx" and not (self.idx_a and self.idx_b):
            raise ConfigError("source 'idx' needs both idx_a and idx_b")

    @property
    def total_frames(self) -> int:
        return self.in_frames + self.out_frames

    def to_dict(self) -> dict:
        return asdict(self)


def bounce_step(pos: float, vel: float, lim: float) -> tuple[float, float]:
    """Advance one frame on [0, lim] with elastic reflection at both ends."""
    nxt = pos + vel
    if nxt > lim:
        return 2 * lim - nxt, -vel
    if nxt < 0:
        return -nxt, -vel
    return nxt, vel


def trajectories(rng: np.random.Generator, cfg: SpriteSceneConfig) -> np.ndarray:
    """Top-left positions [n_sprites, frames, 2] (row, col) as floats."""
    lim = float(cfg.canvas - cfg.sprite_size)
    out = np.empty((cfg.n_sprites, cfg.total_frames, 2))
    for k in range(cfg.n_sprites):
        pos = rng.uniform(0, lim, 2)
        speed = rng.uniform(*cfg.speed_range)
        theta = rng.uniform(0, 2 * np.pi)
        vel = np.array([speed * np.sin(theta), speed * np.cos(theta)])
        for t in range(cfg.total_frames):
            out[k, t] = pos
            for a in range(2):
                pos[a], vel[a] = bounce_step(pos[a], vel[a], lim)
    return out


class GlyphSource:
    """Draws sprites for variables 1 and 2, procedurally or from IDX files."""

    def __init__(self, cfg: SpriteSceneConfig):
        self.size = cfg.sprite_size
        self.images = None
        if cfg.source == "idx":
            self.images = (read_idx_images(cfg.idx_a), read_idx_images(cfg.idx_b))
            for imgs, name in zip(self.images, (cfg.idx_a, cfg.idx_b)):
                if len(imgs) == 0:
                    raise DataError(f"{name}: IDX file holds no images")

    def draw(self, rng: np.random.Generator, which: int) -> np.ndarray:
        if self.images is None:
            fn = PROCEDURAL["strokes"] if which == 0 else PROCEDURAL["polygons"]
            return fn(rng, self.size)
        imgs = self.images[which]
        return center_by_bbox(imgs[int(rng.integers(len(imgs)))], self.size)


def sample_rng(seed: int, split: str, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), SPLIT_CODES[split], int(index)])


def sprite_layers(cfg: SpriteSceneConfig, glyphs: list, positions: np.ndarray) -> np.ndarray:
    """Each sprite rendered alone: [n_sprites, frames, H, W]."""
    s, c = cfg.sprite_size, cfg.canvas
    layers = np.zeros((len(glyphs), positions.shape[1], c, c), dtype=np.float32)
    top_left = np.rint(positions).astype(np.int64)
    for k, g in enumerate(glyphs):
        for t in range(positions.shape[1]):
            y, x = top_left[k, t]
            layers[k, t, y:y + s, x:x + s] = g
    return layers


def generate_sample(cfg: SpriteSceneConfig, split: str, index: int, source: GlyphSource | None = None,
                    with_layers: bool = False):
    """One scene as float32 [frames, 3, 1, H, W]; optionally the per-sprite layers of variables 1 and 2."""
    source = source or GlyphSource(cfg)
    rng = sample_rng(cfg.seed, split, index)
    pos = trajectories(rng, cfg)
    glyph_a = [source.draw(rng, 0) for _ in range(cfg.n_sprites)]
    glyph_b = [source.draw(rng, 1) for _ in range(cfg.n_sprites)]
    la = sprite_layers(cfg, glyph_a, pos)
    lb = sprite_layers(cfg, glyph_b, pos)
    frames = np.empty((cfg.total_frames, 3, 1, cfg.canvas, cfg.canvas), dtype=np.float32)
    frames[:, 0, 0] = la.max(axis=0)
    frames[:, 1, 0] = lb.max(axis=0)
    frames[:, 2, 0] = np.float32(1.0) - frames[:, 0, 0]
    if with_layers:
        return frames, pos, (la, lb)
    return frames


def bbox_center(img: np.ndarray):
    ys, xs = np.nonzero(img > 0)
    if ys.size == 0:
        return None
    return (ys.min() + ys.max()) / 2.0, (xs.min() + xs.max()) / 2.0


def audit_sample(cfg: SpriteSceneConfig, split: str, index: int, source: GlyphSource | None = None) -> dict:
    """Check the inversion identity and shared trajectories of one regenerated sample.

    Returns ``{"inversion": bool, "max_center_offset": float, "aligned": bool}``
    where the offset is the largest distance between the bounding-box centers
    of a sprite in variable 1 and the same sprite in variable 2 over all frames.
    """
    frames, _, (la, lb) = generate_sample(cfg, split, index, source, with_layers=True)
    inversion = bool(np.array_equal(frames[:, 2, 0], np.float32(1.0) - frames[:, 0, 0]))
    worst = 0.0
    for k in range(la.shape[0]):
        for t in range(la.shape[1]):
            ca, cb = bbox_center(la[k, t]), bbox_center(lb[k, t])
            if ca is None or cb is None:
                worst = np.inf
                continue
            worst = max(worst, abs(ca[0] - cb[0]), abs(ca[1] - cb[1]))
    return {"inversion": inversion, "max_center_offset": float(worst), "aligned": worst <= 1.0}


def generate_mvm(cfg: SpriteSceneConfig, out_dir) -> dict:
    """Write both splits as manifest + blobs and return the manifest."""
    from .dataset import DatasetWriter

    source = GlyphSource(cfg)
    writer = DatasetWriter(Path(out_dir), in_frames=cfg.in_frames, out_frames=cfg.out_frames,
                           variables=VARIABLES, channels_per_var=[1, 1, 1], height=cfg.canvas, width=cfg.canvas,
                           extra={"generator": {"kind": "moving-sprites", **cfg.to_dict()}})
    for split, n in (("train", cfg.n_train), ("test", cfg.n_test)):
        with writer.split(split) as sink:
            for i in range(n):
                frames = generate_sample(cfg, split, i, source)
                sink.append(frames[:cfg.in_frames], frames[cfg.in_frames:])
    return writer.finish()
