"""Full-reference image quality: PSNR and SSIM."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..numerics import as_image

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
PEAK = 1.0


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2 * sigma * sigma))
    w = np.outer(g, g)
    return w / w.sum()


def _pair(x, ref):
    x, ref = as_image(x), as_image(ref)
    if x.shape != ref.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {ref.shape}")
    return x, ref


def psnr(x, ref) -> float:
    """PSNR in dB for peak 1.0; ``inf`` for identical images."""
    x, ref = _pair(x, ref)
    mse = float(((x - ref) ** 2).mean())
    return float("inf") if mse == 0 else float(10.0 * np.log10(PEAK * PEAK / mse))


def ssim(x, ref) -> float:
    """Mean SSIM over all fully contained 11x11 windows and all channels."""
    x, ref = _pair(x, ref)
    if min(x.shape[1:]) < SSIM_WINDOW:
        raise ValueError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    w = gaussian_window()
    c1, c2 = (SSIM_K1 * PEAK) ** 2, (SSIM_K2 * PEAK) ** 2

    def filt(a):
        return np.einsum("chwij,ij->chw", sliding_window_view(a, w.shape, axis=(1, 2)), w)

    mx, my = filt(x), filt(ref)
    sxx = filt(x * x) - mx * mx
    syy = filt(ref * ref) - my * my
    sxy = filt(x * ref) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float((num / den).mean())


def reference_quality(x, ref) -> dict[str, float]:
    return {"psnr_db": psnr(x, ref), "ssim": ssim(x, ref)}
