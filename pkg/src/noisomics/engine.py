"""Noise primitives and the sequential composite corruption pipeline.

Each primitive maps an image in [0, 1] and a strength ``eta`` to a corrupted
image, clamped back to [0, 1].  :func:`compose` chains them in a given order
with per-stage derived random streams, so changing one stage's strength never
perturbs the draws of another stage.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .numerics import as_image, clamp01, conv2d_same
from .rng import RngStream, derive_stream

PRIMITIVES = ("gaussian", "salt_pepper", "poisson", "quantization", "anisotropic", "clean")
DEFAULT_ORDER = PRIMITIVES
N_PRIMITIVES = len(PRIMITIVES)

QUANT_PASSTHROUGH = 1e-6
SP_MAX = 0.5

# 5x5 binomial approximation of a Gaussian (outer product of [1,4,6,4,1]/16).
_BINOMIAL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
ANISO_KERNEL = np.outer(_BINOMIAL, _BINOMIAL)
ANISO_KERNEL.setflags(write=False)


@dataclass(frozen=True)
class NoiseStrengths:
    gaussian: float = 0.0
    salt_pepper: float = 0.0
    poisson: float = 0.0
    quantization: float = 0.0
    anisotropic: float = 0.0
    clean: float = 0.0

    @classmethod
    def from_vector(cls, v) -> "NoiseStrengths":
        v = np.asarray(v, dtype=np.float64).ravel()
        if v.size != N_PRIMITIVES:
            raise ValueError(f"need {N_PRIMITIVES} strengths, got {v.size}")
        return cls(*(float(a) for a in v))

    @classmethod
    def only(cls, name: str, eta: float) -> "NoiseStrengths":
        if name not in PRIMITIVES:
            raise ValueError(f"unknown primitive {name!r}")
        return cls(**{name: float(eta)})

    def vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PRIMITIVES], dtype=np.float64)

    def as_dict(self) -> dict[str, float]:
        return {n: getattr(self, n) for n in PRIMITIVES}

    def dominant(self) -> str:
        # np.argmax returns the first maximum, i.e. ties go to the earlier primitive
        return PRIMITIVES[int(np.argmax(self.vector()))]


@dataclass(frozen=True, eq=False)
class NoiseSample:
    clean_id: str
    corrupted: np.ndarray
    strengths: NoiseStrengths
    stream: RngStream
    order: tuple[str, ...] = DEFAULT_ORDER
    modes: Mapping[str, str] = field(default_factory=dict)


def softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max())
    return e / e.sum()


def sample_strengths(rng: RngStream) -> NoiseStrengths:
    """eta = softmax(z) with z ~ N(0, I_6)."""
    z = rng.sampler().normal(N_PRIMITIVES)
    return NoiseStrengths.from_vector(softmax(z))


def _check_eta(eta: float, name: str) -> float:
    eta = float(eta)
    if not np.isfinite(eta) or eta < 0:
        raise ValueError(f"{name} strength must be a finite value >= 0, got {eta}")
    return eta


def apply_gaussian(x, eta: float, rng: RngStream) -> np.ndarray:
    eta = _check_eta(eta, "gaussian")
    x = as_image(x)
    if eta == 0:
        return x.copy()
    return clamp01(x + rng.sampler().normal(x.shape, std=eta))


def apply_salt_pepper(x, eta: float, rng: RngStream) -> np.ndarray:
    eta = _check_eta(eta, "salt_pepper")
    if eta > SP_MAX:
        raise ValueError(f"salt_pepper strength must be <= {SP_MAX}, got {eta}")
    x = as_image(x)
    if eta == 0:
        return x.copy()
    r = rng.sampler().uniform(x.shape)
    out = x.copy()
    out[r > 1.0 - eta] = 1.0
    out[r < eta] = 0.0
    return out


def apply_poisson(x, eta: float, rng: RngStream, mode: str = "literal") -> np.ndarray:
    """``x + Poisson(eta * x)``; ``mode="centered"`` subtracts the mean ``eta * x``."""
    eta = _check_eta(eta, "poisson")
    if mode not in ("literal", "centered"):
        raise ValueError(f"unknown poisson mode {mode!r}")
    x = as_image(x)
    if eta == 0:
        return x.copy()
    rate = eta * x
    counts = rng.sampler().poisson(rate).astype(np.float64)
    if mode == "centered":
        counts = counts - rate
    return clamp01(x + counts)


def apply_quantization(x, eta: float, rng: RngStream, mode: str = "dithered") -> np.ndarray:
    """Dithered floor quantization ``eta * floor(x / eta + U)``.

    ``mode="additive"`` gives the algebraically reduced form ``x + eta * U``.
    """
    eta = _check_eta(eta, "quantization")
    if mode not in ("dithered", "additive"):
        raise ValueError(f"unknown quantization mode {mode!r}")
    x = as_image(x)
    if eta < QUANT_PASSTHROUGH:
        return x.copy()
    u = rng.sampler().uniform(x.shape)
    if mode == "additive":
        return clamp01(x + eta * u)
    return clamp01(eta * np.floor(x / eta + u))


def anisotropic_field(shape, eta: float, rng: RngStream) -> np.ndarray:
    """Spatially correlated noise: white N(0, eta^2) filtered by the fixed kernel."""
    white = rng.sampler().normal(shape, std=eta)
    return conv2d_same(white, ANISO_KERNEL)


def apply_anisotropic(x, eta: float, rng: RngStream) -> np.ndarray:
    eta = _check_eta(eta, "anisotropic")
    x = as_image(x)
    if eta == 0:
        return x.copy()
    return clamp01(x + anisotropic_field(x.shape, eta, rng))


def apply_clean(x, eta: float = 0.0, rng: RngStream | None = None) -> np.ndarray:
    return as_image(x).copy()


def _stage_fn(name: str, modes: Mapping[str, str]) -> Callable:
    if name == "poisson":
        return lambda x, eta, rng: apply_poisson(x, eta, rng, mode=modes.get("poisson", "literal"))
    if name == "quantization":
        return lambda x, eta, rng: apply_quantization(
            x, eta, rng, mode=modes.get("quantization", "dithered"))
    return REGISTRY[name]


REGISTRY: dict[str, Callable] = {
    "gaussian": apply_gaussian,
    "salt_pepper": apply_salt_pepper,
    "poisson": apply_poisson,
    "quantization": apply_quantization,
    "anisotropic": apply_anisotropic,
    "clean": apply_clean,
}


def stage_stream(rng: RngStream, name: str, position: int) -> RngStream:
    return derive_stream(rng, name, position)


def compose(x, strengths: NoiseStrengths, rng: RngStream, order: Sequence[str] = DEFAULT_ORDER,
            clean_id: str = "", modes: Mapping[str, str] | None = None) -> NoiseSample:
    """Apply every primitive in ``order``, clamping after each stage.

    Softmax strengths can exceed the salt-and-pepper cap; that stage then
    runs at the cap (every pixel becomes an impulse either way) while the
    label keeps the sampled value.
    """
    order = tuple(order)
    for name in order:
        if name not in REGISTRY:
            raise ValueError(f"unknown primitive {name!r}")
    if sorted(order) != sorted(PRIMITIVES):
        raise ValueError(f"order must be a permutation of {PRIMITIVES}, got {order}")
    modes = dict(modes or {})
    out = as_image(x)
    for position, name in enumerate(order):
        eta = getattr(strengths, name)
        if name == "salt_pepper":
            eta = min(eta, SP_MAX)
        out = clamp01(_stage_fn(name, modes)(out, eta, stage_stream(rng, name, position)))
    return NoiseSample(clean_id=clean_id, corrupted=out, strengths=strengths, stream=rng,
                       order=order, modes=modes)


def resynthesize(clean, sample: NoiseSample) -> np.ndarray:
    return compose(clean, sample.strengths, sample.stream, sample.order,
                   clean_id=sample.clean_id, modes=sample.modes).corrupted
