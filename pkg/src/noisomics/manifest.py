"""Line-delimited JSON manifests of clean, corrupted and external images."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .engine import PRIMITIVES, NoiseStrengths

ROLES = ("clean", "corrupted", "external")
METADATA_TYPES = {"iso": (int, float), "shutter_speed": (int, float), "brightness": (int, float),
                  "device": (str,), "temperature": (int, float), "depth_um": (int, float),
                  "arm": (str,)}


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class Record:
    id: str
    image: str
    role: str
    source: str | None = None
    strengths: NoiseStrengths | None = None
    seed_path: str | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.id:
            raise ManifestError("record id must be non-empty")
        if self.role not in ROLES:
            raise ManifestError(f"record {self.id!r}: role must be one of {ROLES}, got {self.role!r}")
        for key, value in self.metadata.items():
            kinds = METADATA_TYPES.get(key)
            if kinds and (isinstance(value, bool) or not isinstance(value, kinds)):
                raise ManifestError(f"record {self.id!r}: metadata {key!r} has invalid value {value!r}")

    def to_json(self) -> str:
        d = {"id": self.id, "image": self.image, "role": self.role}
        if self.source is not None:
            d["source"] = self.source
        if self.strengths is not None:
            d["strengths"] = self.strengths.as_dict()
        if self.seed_path is not None:
            d["seed_path"] = self.seed_path
        if self.metadata:
            d["metadata"] = self.metadata
        return json.dumps(d, sort_keys=True, separators=(",", ":"), ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: dict) -> "Record":
        unknown = set(d) - {"id", "image", "role", "source", "strengths", "seed_path", "metadata"}
        if unknown:
            raise ManifestError(f"record {d.get('id')!r}: unknown fields {sorted(unknown)}")
        try:
            s = d.get("strengths")
            if s is not None:
                if set(s) != set(PRIMITIVES):
                    raise ManifestError(f"record {d.get('id')!r}: strengths need keys {PRIMITIVES}")
                s = NoiseStrengths(**{k: float(v) for k, v in s.items()})
            return cls(str(d["id"]), str(d["image"]), d["role"], d.get("source"), s,
                       d.get("seed_path"), dict(d.get("metadata") or {}))
        except KeyError as exc:
            raise ManifestError(f"record {d.get('id')!r}: missing field {exc.args[0]!r}") from None


@dataclass
class Manifest:
    records: list[Record] = field(default_factory=list)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        """Unique ids; every corrupted record names an existing clean or external source."""
        seen: dict[str, Record] = {}
        for r in self.records:
            if r.id in seen:
                raise ManifestError(f"duplicate id {r.id!r}")
            seen[r.id] = r
        for r in self.records:
            if r.role != "corrupted":
                continue
            src = seen.get(r.source) if r.source is not None else None
            if src is None or src.role not in ("clean", "external"):
                raise ManifestError(f"corrupted record {r.id!r} references missing source {r.source!r}")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def by_id(self) -> dict[str, Record]:
        return {r.id: r for r in self.records}

    def with_role(self, role: str) -> list[Record]:
        return [r for r in self.records if r.role == role]

    def dumps(self) -> str:
        return "".join(r.to_json() + "\n" for r in self.records)

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode("utf-8")).hexdigest()

    @classmethod
    def loads(cls, text: str) -> "Manifest":
        records = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"line {lineno}: {exc.msg}") from None
            records.append(Record.from_dict(d))
        return cls(records)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Manifest":
        return cls.loads(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def of(cls, records: Iterable[Record]) -> "Manifest":
        return cls(list(records))
