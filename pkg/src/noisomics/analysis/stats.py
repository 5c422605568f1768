"""Regression fits, effect sizes, t-tests and kernel density estimates."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import betainc

from ..numerics import UndefinedStatisticError

F2_MEDIUM = 0.15
F2_LARGE = 0.35
SILVERMAN = 1.06


@dataclass(frozen=True)
class RegressionFit:
    slope: float
    intercept: float
    r_squared: float
    n: int
    residual_std: float
    slope_se: float
    intercept_se: float


def _xy(x, y):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValueError("linear fit needs at least 2 points")
    return x, y


def linear_fit(x, y) -> RegressionFit:
    """Ordinary least squares ``y = slope * x + intercept`` with standard errors.

    Standard errors use ``n - 2`` degrees of freedom and are 0 when n == 2.
    A constant ``y`` gives slope 0 and R^2 0.
    """
    x, y = _xy(x, y)
    n = x.size
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    if np.ptp(x) == 0:
        raise UndefinedStatisticError("linear fit needs at least 2 distinct x values")
    flat = np.ptp(y) == 0
    slope = 0.0 if flat else float(((x - xm) * (y - ym)).sum() / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (slope * x + intercept)
    ss_res = float((resid ** 2).sum())
    ss_tot = float(((y - ym) ** 2).sum())
    r2 = 0.0 if flat else min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    s = float(np.sqrt(ss_res / (n - 2))) if n > 2 else 0.0
    slope_se = s / np.sqrt(sxx)
    intercept_se = s * np.sqrt(1.0 / n + xm * xm / sxx)
    return RegressionFit(slope, intercept, r2, n, s, float(slope_se), float(intercept_se))


def ols_r_squared(design: np.ndarray, y) -> float:
    """R^2 of a least-squares fit of ``y`` on the columns of ``design`` (which
    should include an intercept column)."""
    y = np.asarray(y, dtype=np.float64).ravel()
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if np.ptp(y) == 0:
        return 0.0
    ss_res = float(((y - design @ coef) ** 2).sum())
    return min(1.0, max(0.0, 1.0 - ss_res / ss_tot))


class EffectClass(str, Enum):
    SMALL = "Small"
    MEDIUM = "Medium"
    LARGE = "Large"


@dataclass(frozen=True)
class EffectSize:
    f_squared: float
    effect: EffectClass


def classify_f2(f2: float) -> EffectClass:
    if f2 >= F2_LARGE:
        return EffectClass.LARGE
    if f2 >= F2_MEDIUM:
        return EffectClass.MEDIUM
    return EffectClass.SMALL


def cohens_f2(full_r2: float, reduced_r2: float = 0.0) -> EffectSize:
    """``(R2_full - R2_reduced) / (1 - R2_full)`` and its class."""
    if not 0.0 <= reduced_r2 <= full_r2:
        raise ValueError(f"need 0 <= reduced ({reduced_r2}) <= full ({full_r2})")
    if full_r2 >= 1.0:
        raise ValueError("f^2 is unbounded when the full model has R^2 = 1")
    f2 = (full_r2 - reduced_r2) / (1.0 - full_r2)
    return EffectSize(float(f2), classify_f2(f2))


@dataclass(frozen=True)
class TTest:
    t: float
    df: float
    p_value: float


def t_two_sided_p(t: float, df: float) -> float:
    """Two-sided p-value of Student's t via the regularized incomplete beta."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if np.isinf(t):
        return 0.0
    return float(betainc(df / 2.0, 0.5, df / (df + t * t)))


def paired_ttest(a, b) -> TTest:
    a, b = _xy(a, b)
    d = a - b
    sd = float(d.std(ddof=1))
    if sd == 0:
        raise UndefinedStatisticError("paired t-test is undefined for constant differences")
    t = float(d.mean() / (sd / np.sqrt(d.size)))
    df = d.size - 1
    return TTest(t, float(df), t_two_sided_p(t, df))


def slope_difference_test(a: RegressionFit, b: RegressionFit) -> TTest:
    """t-test of equal slopes for two independent simple regressions."""
    se = float(np.hypot(a.slope_se, b.slope_se))
    df = a.n + b.n - 4
    if df <= 0:
        raise ValueError("slope comparison needs more than 4 points in total")
    if se == 0:
        raise UndefinedStatisticError("slope difference undefined with zero standard errors")
    t = (a.slope - b.slope) / se
    return TTest(float(t), float(df), t_two_sided_p(t, df))


def silverman_bandwidth(points) -> float:
    p = np.asarray(points, dtype=np.float64).ravel()
    if p.size < 2:
        raise ValueError("bandwidth needs at least 2 points")
    sd = float(p.std(ddof=1))
    if sd == 0:
        raise UndefinedStatisticError("bandwidth is undefined for zero-spread data")
    return SILVERMAN * sd * p.size ** -0.2


def kde_1d(points, grid, bandwidth: float | None = None) -> np.ndarray:
    """Gaussian kernel density of ``points`` evaluated on ``grid``."""
    p = np.asarray(points, dtype=np.float64).ravel()
    g = np.asarray(grid, dtype=np.float64)
    h = silverman_bandwidth(p) if bandwidth is None else float(bandwidth)
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    z = (g[..., None] - p) / h
    return np.exp(-0.5 * z * z).sum(axis=-1) / (p.size * h * np.sqrt(2 * np.pi))
