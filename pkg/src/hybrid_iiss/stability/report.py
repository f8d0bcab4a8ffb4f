"""Residual reports shared by all estimate checks."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["CheckReport", "DEFAULT_CHECK_TOL", "merge_reports"]

DEFAULT_CHECK_TOL = 1e-6


def _num(v):
    v = float(v)
    return v if math.isfinite(v) else None


@dataclass(eq=False)
class CheckReport:
    """Per-sample residuals ``lhs - rhs`` of one estimate.

    ``violated`` holds iff ``max_residual > check_tol``.  Samples are tagged
    with the trajectory index and a stream name (checks with two inequalities
    keep them apart).
    """

    kind: str
    parameters: dict
    t: np.ndarray
    j: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    traj: np.ndarray
    stream: np.ndarray
    check_tol: float = DEFAULT_CHECK_TOL
    n_skipped: int = 0
    extra: dict = field(default_factory=dict)

    @classmethod
    def build(cls, kind, parameters, t, j, lhs, rhs, traj=None, stream="estimate",
              check_tol=DEFAULT_CHECK_TOL, n_skipped=0, extra=None):
        t = np.asarray(t, dtype=float).reshape(-1)
        n = t.size
        traj = np.zeros(n, dtype=np.int64) if traj is None else np.asarray(traj, np.int64)
        if isinstance(stream, str):
            stream = np.full(n, stream)
        return cls(kind, dict(parameters), t, np.asarray(j, dtype=np.int64).reshape(-1),
                   np.asarray(lhs, dtype=float).reshape(-1),
                   np.asarray(rhs, dtype=float).reshape(-1), traj,
                   np.asarray(stream, dtype=str), float(check_tol), int(n_skipped),
                   dict(extra or {}))

    @property
    def residual(self) -> np.ndarray:
        return self.lhs - self.rhs

    @property
    def n_samples(self) -> int:
        return int(self.t.size)

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residual)) if self.t.size else -math.inf

    @property
    def violated(self) -> bool:
        return self.max_residual > self.check_tol

    def stream_max(self, name: str) -> float:
        sel = self.stream == name
        return float(np.max(self.residual[sel])) if np.any(sel) else -math.inf

    @property
    def witness(self) -> dict | None:
        if not self.t.size:
            return None
        k = int(np.argmax(self.residual))
        return {
            "t": float(self.t[k]), "j": int(self.j[k]), "trajectory": int(self.traj[k]),
            "stream": str(self.stream[k]), "lhs": _num(self.lhs[k]), "rhs": _num(self.rhs[k]),
            "residual": _num(self.residual[k]),
        }

    def to_dict(self, samples: bool = True) -> dict:
        out = {
            "kind": self.kind,
            "parameters": self.parameters,
            "max_residual": _num(self.max_residual),
            "violated": self.violated,
            "check_tol": self.check_tol,
            "n_samples": self.n_samples,
            "n_skipped": self.n_skipped,
            "witness": self.witness,
        }
        out.update(self.extra)
        if samples:
            res = self.residual
            out["samples"] = [
                {"t": float(self.t[k]), "j": int(self.j[k]), "trajectory": int(self.traj[k]),
                 "stream": str(self.stream[k]), "lhs": _num(self.lhs[k]),
                 "rhs": _num(self.rhs[k]), "residual": _num(res[k])}
                for k in range(self.t.size)
            ]
        return out

    def to_json(self, samples: bool = True, **kwargs) -> str:
        return json.dumps(self.to_dict(samples), sort_keys=True, **kwargs)

    def summary(self) -> str:
        state = "VIOLATED" if self.violated else "no violation"
        return (f"{self.kind}: {state} (max residual {self.max_residual:.6g}, "
                f"{self.n_samples} samples, tol {self.check_tol:g})")


def merge_reports(reports, kind=None) -> CheckReport:
    """Concatenate reports in order, renumbering trajectories."""
    reports = list(reports)
    if not reports:
        raise ValueError("nothing to merge")
    offset, parts = 0, []
    for r in reports:
        parts.append(r.traj + offset)
        offset += int(r.traj.max()) + 1 if r.traj.size else 1
    cat = np.concatenate
    first = reports[0]
    return CheckReport(kind or first.kind, first.parameters,
                       cat([r.t for r in reports]), cat([r.j for r in reports]),
                       cat([r.lhs for r in reports]), cat([r.rhs for r in reports]),
                       cat(parts), cat([r.stream for r in reports]), first.check_tol,
                       sum(r.n_skipped for r in reports), dict(first.extra))
