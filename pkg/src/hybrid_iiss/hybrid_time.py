"""Hybrid time domains and the signals defined on them.

A domain is the union of ``[t_j, t_{j+1}] x {j}`` for consecutive ``j``.
Arcs store one polyline per phase; inputs are piecewise constant per phase
with explicit values at the jump instants.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "DomainError", "WindowError", "ConcatError", "HybridPoint", "HybridTimeDomain",
    "HybridArc", "HybridInput", "InputSchedule", "hybrid_leq", "lex_leq",
    "sup_t", "sup_j", "length", "index_at", "jump_times", "slice_window",
    "concat_inputs", "write_trajectory_csv", "read_trajectory_csv",
]


class DomainError(ValueError):
    """Invalid hybrid time domain, or a point outside one."""


class WindowError(ValueError):
    pass


class ConcatError(ValueError):
    pass


class HybridPoint(NamedTuple):
    t: float
    j: int


def hybrid_leq(p1, p2) -> bool:
    """Order on hybrid times: ``(t1, j1) <= (t2, j2)`` iff ``t1 + j1 <= t2 + j2``.

    Distinct points can compare equal both ways (e.g. ``(1, 0)`` and ``(0, 1)``).
    """
    return p1[0] + p1[1] <= p2[0] + p2[1]


def lex_leq(p1, p2) -> bool:
    """Lexicographic ``(j, t)`` order, for bookkeeping only."""
    return (p1[1], p1[0]) <= (p2[1], p2[0])


@dataclass(frozen=True)
class HybridTimeDomain:
    """Compact hybrid time domain given by per-phase ``(t_start, t_end)`` pairs.

    ``complete`` marks an unbounded domain for analysis; its length is
    infinite.  The simulator never produces one.
    """

    phases: tuple
    complete: bool = False

    def __post_init__(self):
        phases = tuple((float(a), float(b)) for a, b in self.phases)
        object.__setattr__(self, "phases", phases)
        if not phases:
            raise DomainError("a hybrid time domain needs at least one phase")
        if phases[0][0] != 0.0:
            raise DomainError(f"phase 0 must start at t=0, got {phases[0][0]}")
        for j, (a, b) in enumerate(phases):
            if not (math.isfinite(a) and math.isfinite(b)) or a > b:
                raise DomainError(f"phase {j} has invalid interval [{a}, {b}]")
            if j and phases[j - 1][1] != a:
                raise DomainError(
                    f"phase {j} starts at {a} but phase {j - 1} ends at {phases[j - 1][1]}")

    @classmethod
    def from_jump_times(cls, jumps: Sequence[float], t_end: float):
        edges = [0.0, *map(float, jumps), float(t_end)]
        return cls(tuple(zip(edges[:-1], edges[1:])))

    @property
    def n_phases(self) -> int:
        return len(self.phases)

    def interval(self, j: int):
        return self.phases[j]

    def contains(self, point) -> bool:
        t, j = point
        if j != int(j) or not 0 <= j < len(self.phases):
            return False
        a, b = self.phases[int(j)]
        return a <= t <= b

    @property
    def terminal(self) -> HybridPoint:
        return HybridPoint(self.phases[-1][1], len(self.phases) - 1)


def sup_t(d: HybridTimeDomain) -> float:
    return math.inf if d.complete else d.phases[-1][1]


def sup_j(d: HybridTimeDomain) -> float:
    return math.inf if d.complete else len(d.phases) - 1


def length(d: HybridTimeDomain) -> float:
    return sup_t(d) + sup_j(d)


def _domain_of(obj) -> HybridTimeDomain:
    return obj if isinstance(obj, HybridTimeDomain) else obj.domain


def index_at(sig, s: float) -> int:
    """``i(s)``: the largest phase index whose interval contains ``s``."""
    d = _domain_of(sig)
    if s < 0 or s > sup_t(d):
        raise DomainError(f"s={s} outside [0, {sup_t(d)}]")
    for j in range(len(d.phases) - 1, -1, -1):
        a, b = d.phases[j]
        if a <= s <= b:
            return j
    raise DomainError(f"s={s} not covered by the domain")  # pragma: no cover


def jump_times(sig) -> list:
    """The jump times: all ``(t, j)`` with ``(t, j + 1)`` also in the domain."""
    d = _domain_of(sig)
    return [HybridPoint(d.phases[j][1], j) for j in range(len(d.phases) - 1)]


def slice_window(d: HybridTimeDomain, r: float, samples: int = 5) -> list:
    """Sampled domain points with ``t + j`` in ``[r - 1, r]``.

    Each phase meeting the window contributes its clipped interval's end
    points plus ``samples`` evenly spaced interior points.
    """
    d = _domain_of(d)
    if not (1.0 <= r < length(d) + 1.0):
        raise WindowError(f"r={r} outside [1, {length(d) + 1})")
    out = []
    for j, (a, b) in enumerate(d.phases):
        lo = max(a, r - 1.0 - j)
        hi = min(b, r - j)
        if lo > hi:
            continue
        ts = np.unique(np.concatenate([[lo, hi], np.linspace(lo, hi, samples + 2)]))
        out.extend(HybridPoint(float(t), j) for t in ts)
    return out


# ---------------------------------------------------------------------------
# signals

@dataclass(frozen=True, eq=False)
class HybridArc:
    """State polylines, one ``(times, states)`` pair per phase."""

    domain: HybridTimeDomain
    times: tuple
    states: tuple

    def __post_init__(self):
        times = tuple(np.asarray(t, dtype=float) for t in self.times)
        states = tuple(np.atleast_2d(np.asarray(x, dtype=float)) for x in self.states)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        if len(times) != self.domain.n_phases or len(states) != len(times):
            raise DomainError("one polyline per phase is required")
        n = states[0].shape[1]
        for j, (ts, xs) in enumerate(zip(times, states)):
            a, b = self.domain.phases[j]
            if ts.ndim != 1 or ts.size == 0 or xs.shape != (ts.size, n):
                raise DomainError(f"phase {j}: times/states shape mismatch")
            if ts[0] != a or ts[-1] != b:
                raise DomainError(f"phase {j}: samples span [{ts[0]}, {ts[-1]}], "
                                  f"domain says [{a}, {b}]")
            if np.any(np.diff(ts) < 0):
                raise DomainError(f"phase {j}: sample times decrease")

    @property
    def n(self) -> int:
        return self.states[0].shape[1]

    @property
    def x0(self) -> np.ndarray:
        return self.states[0][0].copy()

    @property
    def terminal_state(self) -> np.ndarray:
        return self.states[-1][-1].copy()

    def value_at(self, t: float, j: int) -> np.ndarray:
        if not self.domain.contains((t, j)):
            raise DomainError(f"({t}, {j}) not in the domain")
        ts, xs = self.times[j], self.states[j]
        return np.array([np.interp(t, ts, xs[:, k]) for k in range(self.n)])

    def samples(self):
        """Flattened ``(t, j, x)`` over all phases; jump instants appear twice."""
        t = np.concatenate(self.times)
        j = np.concatenate([np.full(ts.size, k, dtype=np.int64)
                            for k, ts in enumerate(self.times)])
        x = np.concatenate(self.states, axis=0)
        return t, j, x


@dataclass(frozen=True, eq=False)
class HybridInput:
    """Piecewise-constant input on a hybrid time domain.

    Phase ``j`` has break times ``breaks[j]`` (first = phase start, last =
    phase end) and ``levels[j]`` with one row per piece.  ``jump_values[k]``
    is the input at the jump point ``(t_end(k), k)``.
    """

    domain: HybridTimeDomain
    breaks: tuple
    levels: tuple
    jump_values: np.ndarray

    def __post_init__(self):
        breaks = tuple(np.asarray(b, dtype=float) for b in self.breaks)
        levels = tuple(np.asarray(v, dtype=float) for v in self.levels)
        jv = np.asarray(self.jump_values, dtype=float)
        m = levels[0].shape[1] if levels and levels[0].ndim == 2 else 0
        if jv.ndim != 2:
            jv = jv.reshape(-1, m) if jv.size else np.zeros((0, m))
        object.__setattr__(self, "breaks", breaks)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "jump_values", jv)
        d = self.domain
        if len(breaks) != d.n_phases or len(levels) != d.n_phases:
            raise DomainError("one schedule per phase is required")
        for j, (b, lv) in enumerate(zip(breaks, levels)):
            a, e = d.phases[j]
            if b.size < 2 or b[0] != a or b[-1] != e or np.any(np.diff(b) < 0):
                raise DomainError(f"phase {j}: break times do not span [{a}, {e}]")
            if lv.ndim != 2 or lv.shape[0] != b.size - 1 or lv.shape[1] != m:
                raise DomainError(f"phase {j}: expected {b.size - 1} level rows of width {m}")
        if jv.shape != (d.n_phases - 1, m):
            raise DomainError(f"expected {d.n_phases - 1} jump values of width {m}, "
                              f"got shape {jv.shape}")

    @property
    def m(self) -> int:
        return self.levels[0].shape[1]

    def value_at(self, t: float, j: int) -> np.ndarray:
        d = self.domain
        if not d.contains((t, j)):
            raise DomainError(f"({t}, {j}) not in the domain")
        if j < d.n_phases - 1 and t == d.phases[j][1]:
            return self.jump_values[j].copy()
        b = self.breaks[j]
        k = min(int(np.searchsorted(b, t, side="right")) - 1, b.size - 2)
        return self.levels[j][max(k, 0)].copy()

    def values_at(self, ts: np.ndarray, js: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`value_at` (jump points take the jump value)."""
        ts = np.asarray(ts, dtype=float)
        js = np.asarray(js, dtype=np.int64)
        out = np.zeros((ts.size, self.m))
        last = self.domain.n_phases - 1
        for j in np.unique(js):
            sel = np.nonzero(js == j)[0]
            b = self.breaks[j]
            k = np.clip(np.searchsorted(b, ts[sel], side="right") - 1, 0, b.size - 2)
            out[sel] = self.levels[j][k]
            if j < last:
                at_jump = sel[ts[sel] == self.domain.phases[j][1]]
                out[at_jump] = self.jump_values[j]
        return out

    def is_zero(self) -> bool:
        return all(np.all(lv == 0) for lv in self.levels) and np.all(self.jump_values == 0)

    @classmethod
    def constant(cls, domain: HybridTimeDomain, level):
        level = np.atleast_1d(np.asarray(level, dtype=float))
        breaks = [np.array([a, b]) for a, b in domain.phases]
        levels = [level.reshape(1, -1) for _ in domain.phases]
        jv = np.tile(level, (domain.n_phases - 1, 1))
        return cls(domain, tuple(breaks), tuple(levels), jv)


@dataclass(frozen=True, eq=False)
class InputSchedule:
    """Input specification used before the solution's domain is known.

    The flow level is piecewise constant in ``t`` (right-continuous at each
    break).  The value at jump ``j`` is ``jump_levels[j]`` when given,
    otherwise the flow level at the jump time.
    """

    breaks: np.ndarray
    levels: np.ndarray
    jump_levels: np.ndarray | None = None

    def __post_init__(self):
        breaks = np.asarray(self.breaks, dtype=float).reshape(-1)
        levels = np.asarray(self.levels, dtype=float)
        if levels.ndim == 1:
            levels = levels.reshape(-1, 1) if breaks.size + 1 == levels.size and levels.size > 1 \
                else levels.reshape(1, -1)
        if levels.shape[0] != breaks.size + 1:
            raise ValueError(f"{breaks.size} breaks need {breaks.size + 1} level rows, "
                             f"got {levels.shape[0]}")
        if np.any(np.diff(breaks) <= 0) or np.any(breaks <= 0):
            raise ValueError("break times must be positive and strictly increasing")
        jl = None
        if self.jump_levels is not None:
            jl = np.asarray(self.jump_levels, dtype=float).reshape(-1, levels.shape[1])
        object.__setattr__(self, "breaks", breaks)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "jump_levels", jl)

    @classmethod
    def zero(cls, m: int):
        return cls(np.empty(0), np.zeros((1, m)))

    @classmethod
    def constant(cls, level):
        return cls(np.empty(0), np.atleast_1d(np.asarray(level, dtype=float)).reshape(1, -1))

    @property
    def m(self) -> int:
        return self.levels.shape[1]

    def level_at(self, t: float) -> np.ndarray:
        return self.levels[int(np.searchsorted(self.breaks, t, side="right"))]

    def next_break(self, t: float) -> float:
        k = int(np.searchsorted(self.breaks, t, side="right"))
        return float(self.breaks[k]) if k < self.breaks.size else math.inf

    def jump_value(self, j: int, t: float) -> np.ndarray:
        if self.jump_levels is not None and j < self.jump_levels.shape[0]:
            return self.jump_levels[j]
        return self.level_at(t)

    def is_zero(self) -> bool:
        return bool(np.all(self.levels == 0) and
                    (self.jump_levels is None or np.all(self.jump_levels == 0)))

    def key(self) -> tuple:
        jl = None if self.jump_levels is None else self.jump_levels.tobytes()
        return (self.breaks.tobytes(), self.levels.tobytes(), self.levels.shape, jl)

    def realize(self, domain: HybridTimeDomain) -> HybridInput:
        """Restrict the schedule to ``domain``."""
        breaks, levels = [], []
        for a, b in domain.phases:
            inner = self.breaks[(self.breaks > a) & (self.breaks < b)]
            bk = np.concatenate([[a], inner, [b]])
            breaks.append(bk)
            levels.append(np.array([self.level_at(t) for t in bk[:-1]]))
        jv = np.array([self.jump_value(j, domain.phases[j][1])
                       for j in range(domain.n_phases - 1)])
        return HybridInput(domain, tuple(breaks), tuple(levels), jv)

    def to_dict(self) -> dict:
        return {
            "breaks": self.breaks.tolist(),
            "levels": self.levels.tolist(),
            "jump_levels": None if self.jump_levels is None else self.jump_levels.tolist(),
        }


def concat_inputs(u: HybridInput, u2: HybridInput, at) -> HybridInput:
    """``u # u2``: ``u`` up to its terminal point ``at``, then ``u2`` shifted.

    ``u2``'s first phase continues ``u``'s last phase.  If ``u2`` jumps at
    its own ``(0, 0)``, that jump happens at ``at`` with ``u2``'s value.
    """
    d1, d2 = u.domain, u2.domain
    t0, j0 = d1.terminal
    if float(at[0]) != t0 or int(at[1]) != j0:
        raise ConcatError(f"concatenation point {tuple(at)} is not the terminal point "
                          f"({t0}, {j0}) of the first input")
    if u.m != u2.m:
        raise ConcatError("input dimensions differ")
    phases = list(d1.phases[:-1])
    a_last = d1.phases[-1][0]
    shifted = [(a + t0, b + t0) for a, b in d2.phases]
    phases.append((a_last, shifted[0][1]))
    phases.extend(shifted[1:])
    domain = HybridTimeDomain(tuple(phases))

    b_last, l_last = u.breaks[-1], u.levels[-1]
    b_first = u2.breaks[0] + t0
    if b_last[-1] == b_last[0]:
        merged_b, merged_l = b_first, u2.levels[0]
    elif b_first[-1] == b_first[0]:
        merged_b, merged_l = b_last, l_last
    else:
        merged_b = np.concatenate([b_last, b_first[1:]])
        merged_l = np.concatenate([l_last, u2.levels[0]], axis=0)
    breaks = list(u.breaks[:-1]) + [merged_b] + [b + t0 for b in u2.breaks[1:]]
    levels = list(u.levels[:-1]) + [merged_l] + list(u2.levels[1:])
    jv = np.concatenate([u.jump_values, u2.jump_values], axis=0)
    return HybridInput(domain, tuple(breaks), tuple(levels), jv)


# ---------------------------------------------------------------------------
# CSV trajectories: t, j, x_1..x_n, u_1..u_m, omega

def write_trajectory_csv(path, arc: HybridArc, inp: HybridInput, omega_values=None):
    t, j, x = arc.samples()
    u = inp.values_at(t, j) if inp.m else np.zeros((t.size, 0))
    om = np.full(t.size, np.nan) if omega_values is None else np.asarray(omega_values)
    header = ["t", "j"] + [f"x_{k + 1}" for k in range(x.shape[1])] \
        + [f"u_{k + 1}" for k in range(u.shape[1])] + ["omega"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in range(t.size):
            w.writerow([repr(float(t[row])), int(j[row]),
                        *(repr(float(v)) for v in x[row]),
                        *(repr(float(v)) for v in u[row]),
                        repr(float(om[row]))])


def read_trajectory_csv(path):
    """Load a trajectory CSV back into ``(arc, input, omega)``.

    The input is rebuilt as piecewise constant between consecutive rows.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n = sum(1 for h in header if h.startswith("x_"))
    m = sum(1 for h in header if h.startswith("u_"))
    data = np.array([[float(v) for v in r] for r in body])
    t, j = data[:, 0], data[:, 1].astype(np.int64)
    x = data[:, 2:2 + n]
    u = data[:, 2 + n:2 + n + m]
    omega = data[:, 2 + n + m]
    n_phases = int(j.max()) + 1
    times, states, breaks, levels = [], [], [], []
    phases = []
    jump_vals = []
    for k in range(n_phases):
        sel = j == k
        ts = t[sel]
        phases.append((ts[0], ts[-1]))
        times.append(ts)
        states.append(x[sel])
        us = u[sel]
        if ts.size > 1:
            keep = np.concatenate([[True], np.diff(ts) > 0])
            b = ts[keep]
            lv = us[keep][:-1] if b.size > 1 else us[:1]
            if b.size == 1:
                b = np.array([ts[0], ts[0]])
        else:
            b = np.array([ts[0], ts[0]])
            lv = us[:1]
        breaks.append(b)
        levels.append(lv.reshape(-1, m))
        if k < n_phases - 1:
            jump_vals.append(us[-1])
    domain = HybridTimeDomain(tuple(phases))
    arc = HybridArc(domain, tuple(times), tuple(states))
    jv = np.array(jump_vals).reshape(-1, m)
    inp = HybridInput(domain, tuple(breaks), tuple(levels), jv)
    return arc, inp, omega
