"""Procedural clean images, so nothing in the toolkit needs external data.

Two disjoint families are provided.  ``smooth`` images are low-frequency
(gradients, sinusoids, blurred blobs); ``structured`` images have hard edges
and fine detail (checkers, stripes, rectangles, fine noise textures).
"""
from __future__ import annotations

import numpy as np

from .numerics import conv2d_same
from .rng import RngStream

FAMILIES = {
    "smooth": ("gradient", "radial", "sinusoid", "blobs"),
    "structured": ("checker", "stripes", "rectangles", "grain"),
}
KINDS = tuple(k for kinds in FAMILIES.values() for k in kinds)


def _grid(size: int):
    t = (np.arange(size) + 0.5) / size
    return np.meshgrid(t, t, indexing="ij")


def _box_blur(field: np.ndarray, passes: int, width: int = 5) -> np.ndarray:
    k = np.full((width, width), 1.0 / width**2)
    for _ in range(passes):
        field = conv2d_same(field, k)
    return field


def _raw(kind: str, size: int, s) -> np.ndarray:
    yy, xx = _grid(size)
    if kind == "gradient":
        theta = s.uniform() * 2 * np.pi
        return np.cos(theta) * xx + np.sin(theta) * yy
    if kind == "radial":
        cy, cx = s.uniform(2)
        return np.hypot(yy - cy, xx - cx)
    if kind == "sinusoid":
        theta = s.uniform() * np.pi
        freq = 1.0 + 3.0 * s.uniform()
        phase = s.uniform() * 2 * np.pi
        return np.sin(2 * np.pi * freq * (np.cos(theta) * xx + np.sin(theta) * yy) + phase)
    if kind == "blobs":
        return _box_blur(s.normal((size, size)), passes=max(2, size // 8))
    if kind == "checker":
        cells = int(s.integers(2, 9))
        return ((np.floor(xx * cells) + np.floor(yy * cells)) % 2).astype(np.float64)
    if kind == "stripes":
        period = int(s.integers(3, max(4, size // 3)))
        vertical = s.uniform() < 0.5
        coord = np.arange(size)[None, :] if vertical else np.arange(size)[:, None]
        return np.broadcast_to((coord // period) % 2, (size, size)).astype(np.float64)
    if kind == "rectangles":
        img = np.zeros((size, size))
        for _ in range(int(s.integers(3, 8))):
            y0, x0 = s.integers(0, size, 2)
            h, w = s.integers(size // 8 + 1, size // 2 + 2, 2)
            img[y0:y0 + h, x0:x0 + w] = s.uniform()
        return img
    if kind == "grain":
        return _box_blur(s.normal((size, size)), passes=1, width=3)
    raise ValueError(f"unknown texture kind {kind!r}")


def texture(kind: str, size: int, rng: RngStream, lo: float | None = None,
            hi: float | None = None) -> np.ndarray:
    """One ``(1, size, size)`` texture rescaled to ``[lo, hi]``.

    When ``lo``/``hi`` are omitted they are drawn so the contrast range is
    random but stays inside [0.05, 0.95].
    """
    s = rng.sampler()
    raw = _raw(kind, size, s)
    if lo is None or hi is None:
        a, b = np.sort(s.uniform(2))
        lo = 0.05 + 0.3 * a
        hi = 0.65 + 0.3 * b
    span = raw.max() - raw.min()
    unit = (raw - raw.min()) / span if span > 0 else np.full_like(raw, 0.5)
    return (lo + (hi - lo) * unit)[None]


def texture_set(n: int, size: int, rng: RngStream, family: str | None = None,
                lo: float | None = None, hi: float | None = None) -> list[np.ndarray]:
    """``n`` textures cycling through the kinds of ``family`` (all kinds if None)."""
    kinds = FAMILIES[family] if family else KINDS
    return [texture(kinds[i % len(kinds)], size, rng.derive("texture", i), lo, hi)
            for i in range(n)]
