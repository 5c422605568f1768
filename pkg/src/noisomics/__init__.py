"""Composite image-noise synthesis, strength estimation and evaluation statistics."""
from .engine import (DEFAULT_ORDER, PRIMITIVES, NoiseSample, NoiseStrengths, compose,
                     resynthesize, sample_strengths)
from .rng import GENERATOR_NAME, RngStream, derive_stream

__version__ = "0.1.0"
