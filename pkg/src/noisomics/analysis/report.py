"""Analysis report records with CSV and JSON serializations of identical content."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

COLUMNS = ("metric", "subset", "value", "ci_low", "ci_high", "n")


def _num(v):
    if v is None:
        return None
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _text(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class AnalysisReport:
    """Rows of ``(metric, subset, value, ci_low, ci_high, n)`` plus notes.

    Every row carries the report-wide provenance columns.  Non-finite values
    serialize as the strings ``inf``, ``-inf`` and ``nan``.
    """
    provenance: dict = field(default_factory=dict)
    rows: list[dict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def add(self, metric: str, subset: str, value=None, ci_low=None, ci_high=None, n=None,
            note: str | None = None) -> None:
        self.rows.append({"metric": metric, "subset": subset, "value": _num(value),
                          "ci_low": _num(ci_low), "ci_high": _num(ci_high),
                          "n": None if n is None else int(n), "note": note or ""})

    def skip(self, analysis: str, reason: str) -> None:
        self.add(analysis, "", note=f"skipped: {reason}")

    def _prov_keys(self) -> list[str]:
        return sorted(self.provenance)

    def to_csv(self) -> str:
        buf = io.StringIO()
        keys = self._prov_keys()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([*COLUMNS, "note", *keys])
        for r in self.rows:
            w.writerow([_text(r[c]) for c in (*COLUMNS, "note")] +
                       [_text(self.provenance[k]) for k in keys])
        return buf.getvalue()

    def to_json(self) -> str:
        rows = [{**r, **{k: self.provenance[k] for k in self._prov_keys()}} for r in self.rows]
        return json.dumps({"provenance": self.provenance, "notes": self.notes, "rows": rows},
                          sort_keys=True, indent=1) + "\n"

    def write(self, stem) -> None:
        from pathlib import Path
        stem = Path(stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        stem.with_suffix(".csv").write_text(self.to_csv())
        stem.with_suffix(".json").write_text(self.to_json())

    @classmethod
    def from_json(cls, text: str) -> "AnalysisReport":
        d = json.loads(text)
        keys = set(d["provenance"])
        rows = [{k: v for k, v in r.items() if k not in keys} for r in d["rows"]]
        return cls(d["provenance"], rows, d["notes"])
