"""Closed-form per-primitive noise estimators.

These serve two purposes: independent oracles when checking the engine, and a
non-learned baseline for strength estimation.  Most take the clean reference
when one exists; only the impulse and quantization estimators are blind.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import ANISO_KERNEL, PRIMITIVES, QUANT_PASSTHROUGH, NoiseStrengths
from .numerics import as_image, conv2d_same, lag1_autocorr

MAD_TO_SIGMA = 1.4826
MEAN3 = np.full((3, 3), 1.0 / 9.0)
# stddev of (x - mean3(x)) for unit white noise
HIGHPASS_GAIN = float(np.sqrt(((np.eye(3)[1][:, None] * np.eye(3)[1][None, :] - MEAN3) ** 2).sum()))
ANISO_GAIN = float(np.sqrt((ANISO_KERNEL ** 2).sum()))

QUANT_MAX_UNIQUE = 2 ** 12
QUANT_COVERAGE = 0.99
QUANT_TOL = 1e-9
POISSON_BINS = 16
POISSON_MIN_BIN = 100

# gates used by estimate_strengths to decide which signature is present
IMPULSIVE_UNCHANGED = 0.1
CORRELATED_RHO = 0.4


@dataclass
class BaselineEstimate:
    strengths: NoiseStrengths
    diagnostics: dict = field(default_factory=dict)

    def dominant(self) -> str:
        return self.strengths.dominant()


def _same_shape(x, clean):
    x, clean = as_image(x), as_image(clean)
    if x.shape != clean.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {clean.shape}")
    return x, clean


def _mad_sigma(v: np.ndarray) -> float:
    v = v.ravel()
    return MAD_TO_SIGMA * float(np.median(np.abs(v - np.median(v))))


def estimate_gaussian_sigma(x, clean=None) -> float:
    """Robust noise stddev.

    With a reference: 1.4826 * MAD of the residual.  Blind: the same on the
    3x3 high-pass residual, divided by the high-pass gain for white noise.
    """
    if clean is not None:
        x, clean = _same_shape(x, clean)
        return _mad_sigma(x - clean)
    x = as_image(x)
    return _mad_sigma(x - conv2d_same(x, MEAN3)) / HIGHPASS_GAIN


def estimate_sp_fraction(x) -> float:
    """Symmetric impulse fraction: (#zeros + #ones) / (2 n)."""
    x = as_image(x)
    return float(((x == 0.0).sum() + (x == 1.0).sum()) / (2.0 * x.size))


def estimate_quant_step(x) -> float:
    """Lattice step of a quantized image, or 0 when no lattice is found.

    The candidate step is the smallest gap between distinct unsaturated
    values; it is accepted when multiples of it cover at least 99% of the
    unsaturated pixels.  Pixels at exactly 1.0 are ignored because clamping
    maps off-lattice values there.
    """
    v = as_image(x).ravel()
    interior = v[v < 1.0]
    if interior.size == 0:
        return 0.0
    uniq = np.unique(interior)
    if uniq.size > QUANT_MAX_UNIQUE or uniq.size < 2:
        return 0.0
    # merge values that differ only by rounding
    keep = np.concatenate([[True], np.diff(uniq) > QUANT_TOL])
    uniq = uniq[keep]
    if uniq.size < 2:
        return 0.0
    step = float(np.diff(uniq).min())
    if step < QUANT_PASSTHROUGH:
        return 0.0
    k = np.round(interior / step)
    on_lattice = np.abs(interior - k * step) <= QUANT_TOL
    if on_lattice.mean() < QUANT_COVERAGE:
        return 0.0
    return step


def estimate_spatial_corr(x, clean) -> float:
    """Mean lag-1 (horizontal, vertical) autocorrelation of the residual."""
    x, clean = _same_shape(x, clean)
    return lag1_autocorr(x - clean)


def estimate_anisotropic_sigma(x, clean) -> float:
    """White-noise strength behind a kernel-filtered residual: robust residual
    stddev divided by the kernel's L2 norm."""
    x, clean = _same_shape(x, clean)
    return _mad_sigma(x - clean) / ANISO_GAIN


def fit_poisson_gain(x, clean, bins: int = POISSON_BINS,
                     min_count: int = POISSON_MIN_BIN) -> tuple[float, dict]:
    """Gain of the additive Poisson model ``x + Poisson(eta * x)``.

    Pixels are grouped into equal-mass bins of clean intensity.  In each bin
    the event rate is recovered from the fraction of pixels that moved up,
    ``rate = -log(1 - q)``, which stays valid after clamping (any event pushes
    a pixel upward).  The gain is the least-squares slope through the origin
    of rate against mean clean intensity.  Diagnostics also carry the
    residual-variance regression (slope, intercept) against intensity.
    """
    x, clean = _same_shape(x, clean)
    c = clean.ravel()
    r = (x - clean).ravel()
    valid = c < 1.0
    c, r = c[valid], r[valid]
    if np.unique(c).size < 2:
        raise ValueError("poisson gain needs a clean reference with at least 2 intensity levels")
    order = np.argsort(c, kind="stable")
    means, rates, variances, counts = [], [], [], []
    for chunk in np.array_split(order, bins):
        if chunk.size < min_count:
            continue
        q = float((r[chunk] > 0).mean())
        means.append(float(c[chunk].mean()))
        rates.append(-np.log1p(-min(q, 1.0 - 1.0 / chunk.size)))
        variances.append(float(r[chunk].var()))
        counts.append(chunk.size)
    means, rates = np.array(means), np.array(rates)
    w = np.array(counts, dtype=np.float64)
    gain = float((w * means * rates).sum() / (w * means * means).sum()) if means.size else 0.0
    diag = {"bins_used": int(means.size)}
    if means.size >= 2 and np.ptp(means) > 0:
        slope, intercept = np.polyfit(means, variances, 1)
        diag.update(var_slope=float(slope), var_intercept=float(intercept))
    return gain, diag


def estimate_poisson_gain(x, clean) -> float:
    return fit_poisson_gain(x, clean)[0]


def estimate_strengths(x, clean) -> BaselineEstimate:
    """Per-primitive estimates gated by which residual signature is present.

    Impulsive residuals (many untouched pixels) are attributed to salt and
    pepper (both directions) or Poisson (upward only); dense residuals to the
    quantization lattice if one exists, otherwise to anisotropic noise when the
    residual is spatially correlated, else to Gaussian noise.  Estimators whose
    gate fails report 0.
    """
    x, clean = _same_shape(x, clean)
    r = x - clean
    unchanged = float((np.abs(r) < 1e-12).mean())
    up = float((r > 1e-12).mean())
    down = float((r < -1e-12).mean())
    quant = estimate_quant_step(x)
    rho = estimate_spatial_corr(x, clean)
    diag = {"unchanged": unchanged, "up": up, "down": down, "rho": rho, "quant_step": quant}
    est = dict.fromkeys(PRIMITIVES, 0.0)
    if unchanged >= IMPULSIVE_UNCHANGED and not quant:
        if down > 0.1 * up:
            est["salt_pepper"] = estimate_sp_fraction(x)
        elif np.unique(clean).size >= 2:
            est["poisson"], pdiag = fit_poisson_gain(x, clean)
            diag.update(pdiag)
    elif quant:
        est["quantization"] = quant
    elif rho >= CORRELATED_RHO:
        est["anisotropic"] = estimate_anisotropic_sigma(x, clean)
    elif unchanged < 1.0:
        est["gaussian"] = estimate_gaussian_sigma(x, clean)
    if unchanged == 1.0:
        est["clean"] = 1.0
    est = {k: float(np.clip(v, 0.0, 1.0)) for k, v in est.items()}
    return BaselineEstimate(NoiseStrengths(**est), diag)
