"""NSMT tensor files and 8-bit image import.

Layout (little-endian)::

    b"NSMT" | u16 version=1 | u16 dtype=1 (f32) | u32 C | u32 H | u32 W | f32[C*H*W]
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"NSMT"
VERSION = 1
DTYPE_F32 = 1
_HEADER = struct.Struct("<4sHH3I")
HEADER_SIZE = _HEADER.size


class TensorFormatError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


def to_bytes(x) -> bytes:
    a = np.asarray(x)
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3:
        raise ValueError(f"expected a (C, H, W) tensor, got shape {a.shape}")
    payload = np.ascontiguousarray(a, dtype="<f4").tobytes()
    return _HEADER.pack(MAGIC, VERSION, DTYPE_F32, *a.shape) + payload


def from_bytes(data: bytes) -> np.ndarray:
    if len(data) < HEADER_SIZE:
        raise TensorFormatError(f"truncated header: expected {HEADER_SIZE} bytes, got {len(data)}",
                                len(data))
    magic, version, dtype, c, h, w = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise TensorFormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise TensorFormatError(f"unsupported version {version}", 4)
    if dtype != DTYPE_F32:
        raise TensorFormatError(f"unsupported dtype code {dtype}", 6)
    expected = 4 * c * h * w
    actual = len(data) - HEADER_SIZE
    if actual != expected:
        raise TensorFormatError(f"payload length mismatch: expected {expected} bytes, "
                                f"got {actual}", HEADER_SIZE + min(actual, expected))
    return np.frombuffer(data, dtype="<f4", offset=HEADER_SIZE).reshape(c, h, w).astype(np.float32)


def write_tensor(path, x) -> None:
    Path(path).write_bytes(to_bytes(x))


def read_tensor(path) -> np.ndarray:
    return from_bytes(Path(path).read_bytes())


def import_image(path) -> np.ndarray:
    """8-bit grayscale/RGB PNG or PGM as a (C, H, W) float32 tensor in [0, 1]."""
    from PIL import Image

    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB" if "A" in im.mode or im.mode == "P" else "L")
        a = np.asarray(im)
    if a.dtype != np.uint8:
        raise ValueError(f"{path}: only 8-bit images are supported")
    a = a[None] if a.ndim == 2 else np.moveaxis(a, -1, 0)
    return a.astype(np.float32) / np.float32(255)


def load_image(path) -> np.ndarray:
    """Tensor file or 8-bit image, chosen by extension."""
    p = Path(path)
    if p.suffix.lower() in (".nsmt", ".tensor"):
        return read_tensor(p)
    return import_image(p)
