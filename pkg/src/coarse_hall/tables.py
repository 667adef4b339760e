"""Result tables with deterministic CSV output."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__


def config_hash(obj) -> str:
    """Stable short hash of a JSON-serializable config."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _fmt(v) -> str:
    if isinstance(v, np.generic):
        v = v.item()  # numpy 2 scalars repr as "np.float64(...)"
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return repr(v)
    if isinstance(v, complex):
        return f"{v.real!r}{v.imag:+}j"
    return str(v)


@dataclass
class ExperimentTable:
    """Rows of (parameters, results) under a fixed schema.

    ``columns`` holds (name, unit) pairs; unit "" means dimensionless or
    not applicable.  A boolean ``passed`` column, when present, drives the
    pass/fail summary, and ``defect`` (if present) feeds ``worst_defect``.
    """

    suite: str
    columns: list[tuple[str, str]]
    rows: list[tuple] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.metadata.setdefault("version", __version__)

    @property
    def names(self) -> list[str]:
        return [c[0] for c in self.columns]

    def add(self, *values, **named) -> None:
        if named:
            if values:
                raise TypeError("pass either positional or named values")
            missing = set(self.names) - set(named)
            extra = set(named) - set(self.names)
            if missing or extra:
                raise ValueError(f"row keys mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
            values = tuple(named[n] for n in self.names)
        if len(values) != len(self.columns):
            raise ValueError(f"row has {len(values)} values, schema has {len(self.columns)}")
        self.rows.append(tuple(values))

    def column(self, name: str) -> list:
        k = self.names.index(name)
        return [r[k] for r in self.rows]

    def records(self) -> list[dict]:
        return [dict(zip(self.names, r)) for r in self.rows]

    def sort(self, *keys: str) -> None:
        idx = [self.names.index(k) for k in keys]

        def key(row):
            return tuple((row[i] is None, row[i] if row[i] is not None else 0) for i in idx)
        self.rows.sort(key=key)

    def extend(self, other: "ExperimentTable") -> None:
        if other.columns != self.columns:
            raise ValueError("schema mismatch")
        self.rows.extend(other.rows)

    @property
    def pass_count(self) -> int:
        return sum(1 for r in self.records() if r.get("passed") is True)

    @property
    def fail_count(self) -> int:
        return sum(1 for r in self.records() if r.get("passed") is False)

    @property
    def all_passed(self) -> bool:
        return self.fail_count == 0

    def worst_defect(self) -> float | None:
        if "defect" not in self.names:
            return None
        vals = [v for v in self.column("defect") if isinstance(v, (int, float)) and not math.isnan(v)]
        return max(vals) if vals else None

    def summary(self) -> dict:
        return {"suite": self.suite, "pass_count": self.pass_count,
                "fail_count": self.fail_count, "worst_defect": self.worst_defect()}

    def header(self) -> list[str]:
        return [f"{n} [{u}]" if u else n for n, u in self.columns]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header())
        for r in self.rows:
            w.writerow([_fmt(v) for v in r])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())
