"""Encoder/head checkpoints and their binary container.

Container layout (all integers little-endian)::

    b"NSMC" | u32 version | u32 meta_len | meta (canonical JSON, UTF-8)
    | u32 n_blocks | blocks...

    block: u16 name_len | name | u8 dtype (1 = f64) | u64 count
           | 32-byte SHA-256 of payload | payload (count * f64)
"""
from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..engine import ANISO_KERNEL
from ..rng import GENERATOR_NAME
from .network import EncoderConfig, init_encoder, init_head

MAGIC = b"NSMC"
VERSION = 1
STAGES = ("init", "pretrained", "finetuned")
_F64 = 1


class CheckpointFormatError(ValueError):
    pass


@dataclass(eq=False)
class Checkpoint:
    config: EncoderConfig
    encoder: np.ndarray
    head: np.ndarray
    stage: str = "init"
    provenance: dict = field(default_factory=dict)
    log: list[tuple[int, str, float]] = field(default_factory=list)

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}, got {self.stage!r}")

    def log_csv(self) -> str:
        lines = ["epoch,split,loss"]
        lines += [f"{e},{s},{loss!r}" for e, s, loss in self.log]
        return "\n".join(lines) + "\n"

    def log_digest(self) -> str:
        return hashlib.sha256(self.log_csv().encode()).hexdigest()

    def digest(self) -> str:
        return hashlib.sha256(to_bytes(self)).hexdigest()


def initial_checkpoint(config: EncoderConfig) -> Checkpoint:
    return Checkpoint(config, init_encoder(config), init_head(config), stage="init",
                      provenance={"generator": GENERATOR_NAME, "init_seed": config.init_seed})


def _meta(ckpt: Checkpoint) -> bytes:
    meta = {
        "config": ckpt.config.to_dict(),
        "stage": ckpt.stage,
        "provenance": ckpt.provenance,
        "generator": GENERATOR_NAME,
        "aniso_kernel": ANISO_KERNEL.tolist(),
        "log": [[e, s, loss] for e, s, loss in ckpt.log],
        "log_digest": ckpt.log_digest(),
    }
    return json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()


def to_bytes(ckpt: Checkpoint) -> bytes:
    buf = io.BytesIO()
    meta = _meta(ckpt)
    buf.write(MAGIC + struct.pack("<II", VERSION, len(meta)) + meta)
    blocks = [("encoder", ckpt.encoder), ("head", ckpt.head)]
    buf.write(struct.pack("<I", len(blocks)))
    for name, arr in blocks:
        payload = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        raw = name.encode()
        buf.write(struct.pack("<H", len(raw)) + raw)
        buf.write(struct.pack("<BQ", _F64, arr.size))
        buf.write(hashlib.sha256(payload).digest())
        buf.write(payload)
    return buf.getvalue()


def from_bytes(data: bytes) -> Checkpoint:
    view = memoryview(data)
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointFormatError(
                f"truncated checkpoint reading {what} at byte {pos}: need {n}, have {len(view) - pos}")
        chunk = bytes(view[pos:pos + n])
        pos += n
        return chunk

    if take(4, "magic") != MAGIC:
        raise CheckpointFormatError("bad magic at byte 0, expected b'NSMC'")
    version, meta_len = struct.unpack("<II", take(8, "header"))
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version} at byte 4")
    meta = json.loads(take(meta_len, "metadata"))
    (n_blocks,) = struct.unpack("<I", take(4, "block count"))
    blocks = {}
    for _ in range(n_blocks):
        (name_len,) = struct.unpack("<H", take(2, "block name length"))
        name = take(name_len, "block name").decode()
        dtype, count = struct.unpack("<BQ", take(9, f"block {name} header"))
        if dtype != _F64:
            raise CheckpointFormatError(f"unsupported dtype code {dtype} in block {name}")
        digest = take(32, f"block {name} digest")
        payload = take(8 * count, f"block {name} payload")
        if hashlib.sha256(payload).digest() != digest:
            raise CheckpointFormatError(f"digest mismatch in block {name}")
        blocks[name] = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    missing = {"encoder", "head"} - set(blocks)
    if missing:
        raise CheckpointFormatError(f"missing parameter blocks {sorted(missing)} at byte {pos}")
    if pos != len(view):
        raise CheckpointFormatError(f"{len(view) - pos} trailing bytes at byte {pos}")
    log = [(int(e), str(s), float(v)) for e, s, v in meta["log"]]
    return Checkpoint(EncoderConfig.from_dict(meta["config"]), blocks["encoder"], blocks["head"],
                      stage=meta["stage"], provenance=meta["provenance"], log=log)


def save(ckpt: Checkpoint, path) -> None:
    Path(path).write_bytes(to_bytes(ckpt))


def load(path) -> Checkpoint:
    p = Path(path)
    if not p.is_file():
        raise ValueError(f"checkpoint not found: {p}")
    return from_bytes(p.read_bytes())
