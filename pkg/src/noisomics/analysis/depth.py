"""Two-arm depth-gradient analysis: per-arm OLS slopes of a noise component
against imaging depth, their difference test, and the Cohen's f^2 of the
arm effect (full: depth + arm + depth*arm; reduced: depth only)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .stats import (EffectSize, RegressionFit, TTest, cohens_f2, linear_fit, ols_r_squared,
                    slope_difference_test)


@dataclass(frozen=True)
class DepthAnalysis:
    arms: tuple[str, str]
    fits: dict[str, RegressionFit]
    slope_test: TTest
    effect: EffectSize
    full_r2: float
    reduced_r2: float


def depth_analysis(depth, noise, arm) -> DepthAnalysis:
    """``arm`` labels each observation; exactly two distinct labels are required."""
    z = np.asarray(depth, dtype=np.float64).ravel()
    y = np.asarray(noise, dtype=np.float64).ravel()
    labels = np.asarray(arm).ravel()
    if not z.size == y.size == labels.size:
        raise ValueError("depth, noise and arm must have equal lengths")
    names = sorted(set(labels.tolist()), key=str)
    if len(names) != 2:
        raise ValueError(f"depth analysis needs exactly two arms, got {names}")
    fits = {str(a): linear_fit(z[labels == a], y[labels == a]) for a in names}
    a0, a1 = (str(a) for a in names)
    ind = (labels == names[1]).astype(np.float64)
    one = np.ones_like(z)
    full = ols_r_squared(np.column_stack([one, z, ind, z * ind]), y)
    reduced = min(ols_r_squared(np.column_stack([one, z]), y), full)
    return DepthAnalysis((a0, a1), fits, slope_difference_test(fits[a0], fits[a1]),
                         cohens_f2(full, reduced), full, reduced)
