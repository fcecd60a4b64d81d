from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np


def _plain(value):
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


@dataclass
class CheckReport:
    """Verdict of one numerical check: the worst residual against a tolerance."""

    name: str
    passed: bool
    residual: float
    tolerance: float
    details: dict[str, Any] = field(default_factory=dict)

    def __bool__(self) -> bool:
        return bool(self.passed)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "residual": float(self.residual),
            "tolerance": float(self.tolerance),
            "details": _plain(self.details),
        }


def combine(name: str, reports: list[CheckReport]) -> CheckReport:
    """Conjunction of several reports; the residual is the worst ratio-free max."""
    passed = all(r.passed for r in reports)
    residual = max((r.residual for r in reports), default=0.0)
    tol = min((r.tolerance for r in reports), default=0.0)
    return CheckReport(name, passed, residual, tol, {r.name: r.to_dict() for r in reports})
