"""Splittable, counter-based random streams.

A stream is an immutable recipe ``(root_seed, path)``.  Drawing numbers
requires opening a :class:`Sampler`, which wraps a Philox counter-based bit
generator keyed by a BLAKE2b digest of the recipe.  Because the key is a hash
of a length-prefixed encoding of the full derivation path, children with
different ``(label, index)`` steps get unrelated keys, and the same recipe
always yields the same draws.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

GENERATOR_NAME = "philox4x64-blake2b128"

_MASK64 = (1 << 64) - 1
# Poisson sampling switches from inversion to transformed rejection here.
POISSON_INVERSION_LIMIT = 10.0


@dataclass(frozen=True)
class RngStream:
    root_seed: int
    path: tuple[tuple[str, int], ...] = ()
    # running hash of the encoded path; an optimization, not part of identity
    _hasher: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not 0 <= self.root_seed <= _MASK64:
            raise ValueError(f"root_seed must fit in 64 bits, got {self.root_seed}")
        if self._hasher is None:
            h = hashlib.blake2b(digest_size=16, person=b"noisomics-rng")
            h.update(struct.pack("<Q", self.root_seed))
            for label, index in self.path:
                _absorb(h, label, index)
            object.__setattr__(self, "_hasher", h)

    def __reduce__(self):
        # the hasher is rebuilt from the path on unpickle
        return (type(self), (self.root_seed, self.path))

    def derive(self, label: str, index: int = 0) -> "RngStream":
        return derive_stream(self, label, index)

    def key(self) -> int:
        return int.from_bytes(self._hasher.digest(), "little")

    def sampler(self) -> "Sampler":
        return Sampler(self)

    def path_string(self) -> str:
        return "/".join(f"{label}:{index}" for label, index in self.path)

    @classmethod
    def from_path_string(cls, root_seed: int, text: str) -> "RngStream":
        steps = []
        if text:
            for part in text.split("/"):
                label, _, index = part.rpartition(":")
                steps.append((label, int(index)))
        return cls(root_seed, tuple(steps))


def _absorb(h, label: str, index: int) -> None:
    raw = label.encode("utf-8")
    h.update(struct.pack("<I", len(raw)))
    h.update(raw)
    h.update(struct.pack("<q", index))


def derive_stream(parent: RngStream, label: str, index: int = 0) -> RngStream:
    """Child stream of ``parent`` identified by ``(label, index)``."""
    label, index = str(label), int(index)
    h = parent._hasher.copy()
    _absorb(h, label, index)
    return RngStream(parent.root_seed, parent.path + ((label, index),), h)


class Sampler:
    """Stateful cursor over a stream's draws.  Not shared between threads."""

    def __init__(self, stream: RngStream):
        self.stream = stream
        self._gen = np.random.Generator(np.random.Philox(key=stream.key()))

    def uniform(self, size=None) -> np.ndarray:
        """Draws in [0, 1) with 53-bit resolution."""
        return self._gen.random(size)

    def normal(self, size=None, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        z = self._gen.standard_normal(size)
        if std != 1.0:
            z = z * std
        if mean != 0.0:
            z = z + mean
        return z

    def integers(self, low: int, high: int, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def poisson(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=np.float64)
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ValueError("poisson rate must be finite and non-negative")
        flat = lam.ravel()
        out = np.zeros(flat.shape, dtype=np.int64)
        small = flat < POISSON_INVERSION_LIMIT
        # Both branches always consume their draws in the same order, so a
        # fixed (rate array, stream) pair is reproducible.
        if small.any():
            out[small] = _poisson_inversion(flat[small], self.uniform(int(small.sum())))
        if (~small).any():
            out[~small] = _poisson_ptrs(flat[~small], self)
        return out.reshape(lam.shape)


def _poisson_inversion(lam: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Sequential search of the CDF; one uniform per variate."""
    k = np.zeros(lam.shape, dtype=np.int64)
    p = np.exp(-lam)
    cdf = p.copy()
    active = u >= cdf
    # rates < 10 make k > 80 astronomically unlikely; the cap only guards
    # against rounding in the accumulated CDF.
    for step in range(1, 200):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        k[idx] = step
        p[idx] *= lam[idx] / step
        cdf[idx] += p[idx]
        active[idx] = u[idx] >= cdf[idx]
    return k


def _poisson_ptrs(lam: np.ndarray, sampler: Sampler) -> np.ndarray:
    """Hörmann's transformed rejection with squeeze (PTRS), for rates >= 10."""
    from scipy.special import gammaln

    slam = np.sqrt(lam)
    loglam = np.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2)

    out = np.zeros(lam.shape, dtype=np.int64)
    pending = np.arange(lam.size)
    while pending.size:
        u = sampler.uniform(pending.size) - 0.5
        v = sampler.uniform(pending.size)
        us = 0.5 - np.abs(u)
        ap, bp = a[pending], b[pending]
        k = np.floor((2 * ap / us + bp) * u + lam[pending] + 0.43)
        quick = (us >= 0.07) & (v <= vr[pending])
        with np.errstate(divide="ignore", invalid="ignore"):
            lhs = np.log(v) + np.log(invalpha[pending]) - np.log(ap / (us * us) + bp)
            rhs = -lam[pending] + k * loglam[pending] - gammaln(k + 1)
        ok = quick | ((k >= 0) & ~((us < 0.013) & (v > us)) & (lhs <= rhs))
        out[pending[ok]] = k[ok].astype(np.int64)
        pending = pending[~ok]
    return out
