"""Check records and JSON/CSV report writers."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field


@dataclass
class Check:
    name: str
    residual: float
    tolerance: float
    passed: bool
    samples: int = 1
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        self.residual = float(self.residual)
        self.tolerance = float(self.tolerance)
        self.passed = bool(self.passed)
        self.samples = int(self.samples)

    @classmethod
    def below(cls, name, residual, tolerance, samples=1, **detail) -> "Check":
        residual = float(residual)
        return cls(name, residual, float(tolerance), bool(residual <= tolerance), int(samples), detail)

    @classmethod
    def flag(cls, name, ok, samples=1, **detail) -> "Check":
        return cls(name, 0.0 if ok else 1.0, 0.0, bool(ok), int(samples), detail)

    def to_dict(self) -> dict:
        out = {"name": self.name, "residual": _clean(self.residual),
               "tolerance": _clean(self.tolerance), "passed": self.passed}
        if self.detail:
            out["detail"] = {k: _clean(v) for k, v in self.detail.items()}
        return out

    def to_verification_dict(self) -> dict:
        return {"check": self.name, "samples": self.samples, "max_residual": _clean(self.residual),
                "tolerance": _clean(self.tolerance), "passed": self.passed}


def _clean(v):
    if isinstance(v, float):
        if math.isnan(v) or math.isinf(v):
            return str(v)
        return v
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if hasattr(v, "item"):
        return _clean(v.item())
    return v


def command_report(command: str, inputs: dict, checks, extra: dict | None = None) -> dict:
    checks = list(checks)
    out = {
        "command": command,
        "inputs": _clean(inputs),
        "checks": [c.to_dict() for c in checks],
        "passed": all(c.passed for c in checks),
    }
    if extra:
        out.update(_clean(extra))
    return out


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def trajectory_csv(rows) -> str:
    """Rows of ``(t, chart, x, y, f)``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "chart", "x", "y", "f"])
    for t, c, x, y, fv in rows:
        w.writerow([f"{t:.17g}", int(c), f"{x:.17g}", f"{y:.17g}", f"{fv:.17g}"])
    return buf.getvalue()
