"""Exact interventional Shapley values and the polynomial surrogate they explain."""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial
from typing import Callable, Sequence

import numpy as np

MAX_EXACT_FEATURES = 12
RIDGE_LAMBDA = 1e-6


def _coalition_values(model, instance: np.ndarray, background: np.ndarray) -> np.ndarray:
    k = instance.size
    masks = ((np.arange(2 ** k)[:, None] >> np.arange(k)) & 1).astype(bool)
    rows = np.where(masks[:, None, :], instance, background[None, :, :])
    out = np.asarray(model(rows.reshape(-1, k)), dtype=np.float64)
    return out.reshape(2 ** k, len(background)).mean(axis=1)


def shapley_exact(model: Callable[[np.ndarray], np.ndarray], instance,
                  background) -> tuple[np.ndarray, float]:
    """Shapley values of ``model`` at ``instance`` and the base value ``v({})``.

    ``model`` maps an (n, k) array to n outputs.  The value of coalition S is
    the mean over background rows of the model with S's features taken from
    the instance.  All 2^k coalitions are enumerated.
    """
    x = np.asarray(instance, dtype=np.float64).ravel()
    bg = np.atleast_2d(np.asarray(background, dtype=np.float64))
    k = x.size
    if k > MAX_EXACT_FEATURES:
        raise ValueError(f"exact Shapley supports at most {MAX_EXACT_FEATURES} features, got {k}")
    if bg.shape[0] == 0 or bg.shape[1] != k:
        raise ValueError(f"background must be a non-empty (m, {k}) array")
    v = _coalition_values(model, x, bg)
    idx = np.arange(2 ** k)
    size = np.array([bin(i).count("1") for i in idx])
    weight = np.array([factorial(s) * factorial(k - s - 1) / factorial(k) if s < k else 0.0
                       for s in size])
    phi = np.zeros(k)
    for j in range(k):
        bit = 1 << j
        without = idx[(idx & bit) == 0]
        phi[j] = float((weight[without] * (v[without | bit] - v[without])).sum())
    return phi, float(v[0])


@dataclass(frozen=True)
class AttributionReport:
    features: tuple[str, ...]
    values: np.ndarray
    base: float
    outputs: np.ndarray

    @property
    def mean_abs(self) -> np.ndarray:
        return np.abs(self.values).mean(axis=0)

    def efficiency_gap(self) -> np.ndarray:
        return np.abs(self.base + self.values.sum(axis=1) - self.outputs)

    def sankey(self, target: str) -> list[tuple[str, str, float]]:
        return [(f, target, float(w)) for f, w in zip(self.features, self.mean_abs)]


def attribute(model, instances, background, features: Sequence[str] | None = None) -> AttributionReport:
    inst = np.atleast_2d(np.asarray(instances, dtype=np.float64))
    names = tuple(features) if features is not None else tuple(f"x{j}" for j in range(inst.shape[1]))
    if len(names) != inst.shape[1]:
        raise ValueError("feature names do not match the instance width")
    rows, base = [], 0.0
    for x in inst:
        phi, base = shapley_exact(model, x, background)
        rows.append(phi)
    values = np.array(rows).reshape(len(inst), inst.shape[1])
    return AttributionReport(names, values, base, np.asarray(model(inst), dtype=np.float64))


def poly2_features(z: np.ndarray) -> np.ndarray:
    """[1, z_j, z_j^2, z_i z_j (i < j)] for standardized inputs."""
    n, k = z.shape
    cols = [np.ones(n)] + [z[:, j] for j in range(k)] + [z[:, j] ** 2 for j in range(k)]
    cols += [z[:, i] * z[:, j] for i in range(k) for j in range(i + 1, k)]
    return np.column_stack(cols)


@dataclass(frozen=True)
class Surrogate:
    mean: np.ndarray
    scale: np.ndarray
    coef: np.ndarray
    r_squared: float
    ridge: bool

    def __call__(self, features) -> np.ndarray:
        f = np.asarray(features, dtype=np.float64)
        single = f.ndim == 1
        z = (np.atleast_2d(f) - self.mean) / self.scale
        out = poly2_features(z) @ self.coef
        return out[0] if single else out


def surrogate_fit(features, target) -> Surrogate:
    """Least-squares degree-2 polynomial on internally standardized features.

    A rank-deficient design falls back to ridge regression with a fixed
    small penalty and sets ``ridge``.
    """
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    y = np.asarray(target, dtype=np.float64).ravel()
    n, k = x.shape
    if y.size != n:
        raise ValueError(f"{n} feature rows but {y.size} targets")
    if n <= k:
        raise ValueError(f"surrogate needs more rows than features (n={n}, k={k})")
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0] = 1.0
    design = poly2_features((x - mean) / scale)
    ridge = np.linalg.matrix_rank(design) < design.shape[1]
    if ridge:
        p = design.shape[1]
        coef = np.linalg.solve(design.T @ design + RIDGE_LAMBDA * np.eye(p), design.T @ y)
    else:
        coef = np.linalg.lstsq(design, y, rcond=None)[0]
    ss_tot = float(((y - y.mean()) ** 2).sum())
    ss_res = float(((y - design @ coef) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 and ss_res == 0 else (0.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot)
    return Surrogate(mean, scale, coef, float(r2), bool(ridge))
