"""Array helpers shared by the engine, estimators and analysis code.

Images are plain ``numpy`` arrays of shape ``(C, H, W)``.  Arithmetic is done
in float64; files store float32 (see :mod:`noisomics.tensor_io`).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage


class UndefinedStatisticError(ValueError):
    """A statistic is undefined for the given data (e.g. zero variance)."""


def as_image(x) -> np.ndarray:
    """Validate and return ``x`` as a float64 ``(C, H, W)`` array.

    2-D input is promoted to a single channel.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or min(arr.shape) < 1:
        raise ValueError(f"expected a (C, H, W) image, got shape {arr.shape}")
    return arr


def clamp01(x) -> np.ndarray:
    return np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)


def conv2d_same(x, kernel) -> np.ndarray:
    """Per-channel 2-D convolution with reflect padding; output keeps the input shape.

    This is true convolution (the kernel is flipped).  Works on ``(H, W)`` or
    ``(C, H, W)`` input.
    """
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
        raise ValueError(f"kernel must be 2-D with odd side lengths, got shape {k.shape}")
    arr = np.asarray(x, dtype=np.float64)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError(f"expected (H, W) or (C, H, W) input, got shape {arr.shape}")
    # ndimage "mirror" is numpy's "reflect": the edge pixel is not repeated
    out = ndimage.convolve(arr, k[None], mode="mirror")
    return out[0] if squeeze else out


@dataclass(frozen=True)
class SummaryStats:
    mean: float
    stddev: float
    min: float
    max: float
    median: float
    mad: float


def summary_stats(values) -> SummaryStats:
    """Mean, unbiased stddev, extrema, median and median absolute deviation."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("summary_stats needs at least one value")
    med = float(np.median(v))
    return SummaryStats(
        mean=float(v.mean()),
        stddev=float(v.std(ddof=1)) if v.size > 1 else 0.0,
        min=float(v.min()),
        max=float(v.max()),
        median=med,
        mad=float(np.median(np.abs(v - med))),
    )


def lag1_autocorr(field) -> float:
    """Mean of horizontal and vertical lag-1 Pearson correlations of a field.

    Returns 0 for a constant field.
    """
    f = as_image(field)
    pairs = [
        (f[:, :, :-1].ravel(), f[:, :, 1:].ravel()),
        (f[:, :-1, :].ravel(), f[:, 1:, :].ravel()),
    ]
    rs = []
    for a, b in pairs:
        if a.size < 2:
            continue
        a = a - a.mean()
        b = b - b.mean()
        denom = np.sqrt((a * a).sum() * (b * b).sum())
        rs.append(0.0 if denom == 0 else float((a * b).sum() / denom))
    return float(np.mean(rs)) if rs else 0.0
