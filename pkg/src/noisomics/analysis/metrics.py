"""Prediction-quality metrics: RMSE/R^2/Pearson, residual fits, dominant-type
accuracy, threshold accuracy, correlation matrices."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..numerics import UndefinedStatisticError

THRESHOLD_ACCURACY_DEFINITION = (
    "per-component binary agreement: fraction of (instance, component) pairs "
    "with (pred >= t) == (truth >= t)"
)


def _paired(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64).ravel()
    t = np.asarray(truth, dtype=np.float64).ravel()
    if p.size != t.size:
        raise ValueError(f"length mismatch: {p.size} predictions vs {t.size} targets")
    if p.size == 0:
        raise ValueError("empty input")
    return p, t


def pearson_r(a, b) -> float:
    a, b = _paired(a, b)
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise UndefinedStatisticError("pearson r is undefined for a constant input")
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt((a * a).sum() * (b * b).sum())
    if denom == 0:
        raise UndefinedStatisticError("pearson r is undefined for a constant input")
    return float((a * b).sum() / denom)


def regression_metrics(pred, truth) -> dict[str, float]:
    """RMSE, coefficient of determination and Pearson r of ``pred`` against ``truth``.

    ``r_squared`` is ``1 - SS_res / SS_tot`` and is negative for predictions
    worse than the mean.  Pearson r is NaN when the predictions are constant.
    """
    p, t = _paired(pred, truth)
    ss_tot = float(((t - t.mean()) ** 2).sum())
    if np.ptp(t) == 0:
        raise UndefinedStatisticError("R^2 is undefined for constant targets")
    resid = p - t
    ss_res = float((resid * resid).sum())
    try:
        r = pearson_r(p, t)
    except UndefinedStatisticError:
        r = float("nan")
    return {"rmse": float(np.sqrt(ss_res / p.size)), "r_squared": 1.0 - ss_res / ss_tot,
            "pearson_r": r}


@dataclass(frozen=True)
class ResidualFit:
    mu: float
    sigma: float


def fit_residual_gaussian(pred, truth) -> ResidualFit:
    p, t = _paired(pred, truth)
    d = p - t
    return ResidualFit(float(d.mean()), float(d.std(ddof=1)) if d.size > 1 else 0.0)


def classification_report(pred, truth, thresholds: Sequence[float] = ()) -> dict:
    """Dominant-type accuracy and the threshold-accuracy curve.

    Rows are strength vectors.  Ties in argmax go to the earlier component.
    """
    p = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    t = np.atleast_2d(np.asarray(truth, dtype=np.float64))
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    if p.shape[0] == 0:
        raise ValueError("empty input")
    dominant = float((p.argmax(axis=1) == t.argmax(axis=1)).mean())
    curve = [float(((p >= th) == (t >= th)).mean()) for th in thresholds]
    return {"dominant_accuracy": dominant, "thresholds": [float(x) for x in thresholds],
            "threshold_accuracy": curve, "definition": THRESHOLD_ACCURACY_DEFINITION}


def correlation_matrix(columns: Mapping[str, Sequence[float]]) -> tuple[list[str], np.ndarray]:
    """Pearson correlations between named columns.

    Entries involving a constant column are NaN (missing), including its
    diagonal entry.
    """
    names = list(columns)
    data = [np.asarray(columns[n], dtype=np.float64).ravel() for n in names]
    if data and any(d.size != data[0].size for d in data):
        raise ValueError("all columns must have the same length")
    if data and data[0].size < 2:
        raise ValueError("need at least 2 rows")
    k = len(names)
    out = np.full((k, k), np.nan)
    for i in range(k):
        for j in range(i, k):
            try:
                r = 1.0 if i == j and np.ptp(data[i]) > 0 else pearson_r(data[i], data[j])
            except UndefinedStatisticError:
                continue
            out[i, j] = out[j, i] = r
    return names, out
