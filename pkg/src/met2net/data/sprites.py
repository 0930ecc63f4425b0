"""Sprite sources: procedural glyphs and IDX image files."""

from __future__ import annotations

import numpy as np
from matplotlib.path import Path as PolyPath


class DataError(Exception):
    """Malformed, missing or inconsistent data on disk or in a selection."""


def center_by_bbox(img: np.ndarray, size: int) -> np.ndarray:
    """Crop to the nonzero bounding box and paste it centered in a size x size tile."""
    ys, xs = np.nonzero(img > 0)
    out = np.zeros((size, size), dtype=np.float32)
    if ys.size == 0:
        return out
    crop = img[ys.min():ys.max() + 1, xs.min():xs.max() + 1]
    h, w = min(crop.shape[0], size), min(crop.shape[1], size)
    y0, x0 = (size - h) // 2, (size - w) // 2
    out[y0:y0 + h, x0:x0 + w] = crop[:h, :w]
    return out


def _segment_distance(py, px, a, b):
    d = b - a
    L2 = float(d @ d) or 1e-12
    t = np.clip(((py - a[0]) * d[0] + (px - a[1]) * d[1]) / L2, 0.0, 1.0)
    return np.hypot(py - (a[0] + t * d[0]), px - (a[1] + t * d[1]))


def stroke_glyph(rng: np.random.Generator, size: int = 28) -> np.ndarray:
    """A handwriting-like glyph: a random polyline of 3-5 points drawn with a soft pen."""
    grid = np.arange(size, dtype=np.float64) + 0.5
    py, px = np.meshgrid(grid, grid, indexing="ij")
    pts = rng.uniform(size * 0.15, size * 0.85, size=(rng.integers(3, 6), 2))
    radius = rng.uniform(1.2, 2.2)
    dist = np.full((size, size), np.inf)
    for a, b in zip(pts[:-1], pts[1:]):
        dist = np.minimum(dist, _segment_distance(py, px, a, b))
    img = np.clip(radius + 0.5 - dist, 0.0, 1.0).astype(np.float32)
    return center_by_bbox(img, size)


def polygon_glyph(rng: np.random.Generator, size: int = 28) -> np.ndarray:
    """A filled star-shaped polygon with 5-9 vertices and a mild intensity gradient."""
    n = int(rng.integers(5, 10))
    angles = np.sort(rng.uniform(0, 2 * np.pi, n))
    radii = rng.uniform(size * 0.2, size * 0.45, n)
    c = size / 2
    verts = np.stack([c + radii * np.cos(angles), c + radii * np.sin(angles)], axis=1)
    grid = np.arange(size, dtype=np.float64) + 0.5
    py, px = np.meshgrid(grid, grid, indexing="ij")
    inside = PolyPath(verts).contains_points(np.stack([px.ravel(), py.ravel()], axis=1)).reshape(size, size)
    shade = 0.6 + 0.4 * (py / size) * rng.uniform(0.5, 1.0)
    img = np.where(inside, shade, 0.0).astype(np.float32)
    return center_by_bbox(img, size)


PROCEDURAL = {"strokes": stroke_glyph, "polygons": polygon_glyph}


def read_idx_images(path) -> np.ndarray:
    """Read an IDX3 unsigned-byte image file into float32 [n, rows, cols] scaled to [0, 1]."""
    try:
        raw = open(path, "rb").read()
    except OSError as exc:
        raise DataError(f"cannot read sprite file {path}: {exc}") from None
    if len(raw) < 16:
        raise DataError(f"{path}: too short for an IDX header")
    magic, n, rows, cols = np.frombuffer(raw[:16], dtype=">u4")
    if magic != 0x00000803:
        raise DataError(f"{path}: bad IDX magic 0x{int(magic):08x}, expected 0x00000803")
    need = 16 + int(n) * int(rows) * int(cols)
    if len(raw) < need:
        raise DataError(f"{path}: truncated, {len(raw)} bytes for {n} images of {rows}x{cols}")
    data = np.frombuffer(raw[16:need], dtype=np.uint8).reshape(int(n), int(rows), int(cols))
    return data.astype(np.float32) / 255.0


def write_idx_images(path, images: np.ndarray) -> None:
    """Write uint8 [n, rows, cols] images as an IDX3 file (test fixtures, format round trips)."""
    images = np.asarray(images, dtype=np.uint8)
    header = np.array([0x00000803, *images.shape], dtype=">u4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header + images.tobytes())
