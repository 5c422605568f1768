"""Embedding-space statistics: RBF MMD and a 2-D PCA projection."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.spatial.distance import cdist, pdist


def _points(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.shape[0] == 0:
        raise ValueError("empty sample")
    return a


def median_bandwidth(a, b) -> float:
    """Median pairwise distance of the pooled sample; 1.0 if that is zero."""
    pooled = np.concatenate([_points(a), _points(b)])
    if len(pooled) < 2:
        return 1.0
    med = float(np.median(pdist(pooled)))
    return med if med > 0 else 1.0


def mmd_rbf(sample_a, sample_b, bandwidth: float | None = None) -> float:
    """Biased (V-statistic) squared MMD under ``exp(-|u-v|^2 / (2 h^2))``."""
    a, b = _points(sample_a), _points(sample_b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    h = median_bandwidth(a, b) if bandwidth is None else float(bandwidth)
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    g = -0.5 / (h * h)

    def k(u, v):
        return float(np.exp(g * cdist(u, v, "sqeuclidean")).mean())

    kab = k(a, b)
    return max(0.0, k(a, a) + k(b, b) - kab - kab)


def mmd_matrix(groups: Mapping[str, np.ndarray], bandwidth: float | None = None):
    """Pairwise MMD^2 between named embedding sets; returns (names, matrix)."""
    names = list(groups)
    m = np.zeros((len(names), len(names)))
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            m[i, j] = m[j, i] = mmd_rbf(groups[names[i]], groups[names[j]], bandwidth)
    return names, m


@dataclass(frozen=True)
class Projection:
    coords: np.ndarray
    explained_ratio: np.ndarray
    components: np.ndarray
    degenerate: bool


def pca_2d(embeddings) -> Projection:
    """Project onto the top two principal axes of the centered set.

    Axis signs are fixed so the largest-magnitude loading is positive.  When
    the set has rank < 2 the missing axes are zero and ``degenerate`` is set.
    """
    e = _points(embeddings)
    if len(e) < 3:
        raise ValueError("pca_2d needs at least 3 embeddings")
    c = e - e.mean(axis=0)
    _, s, vt = np.linalg.svd(c, full_matrices=False)
    var = s * s
    total = var.sum()
    tol = max(c.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int((s > tol).sum())
    comps = np.zeros((2, e.shape[1]))
    for i in range(min(2, rank)):
        v = vt[i]
        comps[i] = v if v[np.argmax(np.abs(v))] > 0 else -v
    ratio = np.zeros(2)
    if total > 0:
        ratio[:min(2, rank)] = var[:min(2, rank)] / total
    return Projection(c @ comps.T, ratio, comps, rank < 2)
