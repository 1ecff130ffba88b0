"""Audit verdicts shared by the checks, weights and CLI layers."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np


def _plain(value):
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else str(v)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


@dataclass
class CheckReport:
    """One named quantitative verdict.

    ``measured`` and ``bound`` may be scalars or sequences.  ``passed`` is
    decided by the producing check; by default it means
    ``measured <= bound * (1 + tolerance)``.
    """

    name: str
    measured: Any
    bound: Any
    passed: bool
    tolerance: float = 0.0
    metadata: dict = field(default_factory=dict)

    @staticmethod
    def upper_bound(name, measured, bound, tolerance=0.0, **metadata):
        m = np.asarray(measured, dtype=float)
        b = np.asarray(bound, dtype=float)
        passed = bool(np.all(np.isfinite(m)) and np.all(m <= b * (1.0 + tolerance)))
        return CheckReport(name, measured, bound, passed, tolerance, dict(metadata))

    def to_dict(self) -> dict:
        out = _plain(asdict(self))
        meta = out.pop("metadata")
        out["params"] = meta.pop("params", {})
        out["provenance"] = meta.pop("provenance", {})
        out["details"] = meta
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"[{verdict}] {self.name}: measured={_short(self.measured)} bound={_short(self.bound)}"


def _short(value) -> str:
    arr = np.atleast_1d(np.asarray(value, dtype=object))
    if arr.size == 1:
        v = arr[0]
        return f"{v:.6g}" if isinstance(v, (float, np.floating)) else str(v)
    try:
        f = np.asarray(value, dtype=float).ravel()
        return f"[{f.min():.4g} .. {f.max():.4g}] (n={f.size})"
    except (TypeError, ValueError):
        return str(value)
