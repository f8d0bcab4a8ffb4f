"""Comparison functions: class PD/K/K-infinity/L scalars and KL/KLL bounds.

All objects wrap an expression tree and evaluate vectorized.  Class
membership is checked numerically on sample grids (never proven).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate

from .expr import (Node, Num, Opaque, Var, BinOp, Call, evaluate_node,
                   free_vars, parse_expression, substitute, to_text)

__all__ = [
    "FnClass", "DomainError", "RangeError", "ClassValidationError",
    "ScalarComparisonFn", "KLFn", "KLLFn", "ValidationReport",
    "evaluate", "validate_class", "invert", "inverse", "compose",
    "pointwise_combine", "scale", "majorize_to_kinf", "kl_to_kll", "kll_to_kl",
    "validate_kl", "validate_kll", "DEFAULT_GRID",
]

DEFAULT_GRID = np.concatenate([np.linspace(0.0, 1.0, 51), np.linspace(1.1, 20.0, 190)])
ZERO_TOL = 1e-12
PROBE_CAP = 2.0 ** 60
INVERT_CAP = 2.0 ** 64


class FnClass(str, Enum):
    PD = "PD"
    K = "K"
    KINF = "Kinf"
    L = "L"
    UNCLASSIFIED = "Unclassified"


class DomainError(ValueError):
    """Evaluation outside the function's domain (negative or undefined)."""


class RangeError(ValueError):
    """Inversion target lies outside the function's range."""


class ClassValidationError(ValueError):
    """A function failed the sampled checks for its claimed class."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


# ---------------------------------------------------------------------------
# scalar functions

@dataclass(frozen=True, eq=False)
class ScalarComparisonFn:
    """One-argument comparison function over ``s >= 0``."""

    expr: Node
    claimed_class: FnClass = FnClass.UNCLASSIFIED
    var: str = "s"

    @classmethod
    def parse(cls, text: str, claimed_class=FnClass.UNCLASSIFIED, var: str = "s"):
        node = parse_expression(text)
        extra = free_vars(node) - {var}
        if extra:
            raise NameError(f"unexpected variable(s) {sorted(extra)} in {text!r}")
        return cls(node, FnClass(claimed_class), var)

    @classmethod
    def identity(cls):
        return cls(Var("s"), FnClass.KINF)

    @classmethod
    def zero(cls):
        return cls(Num(0.0), FnClass.UNCLASSIFIED)

    def __call__(self, s):
        s_arr = np.asarray(s, dtype=float)
        out = evaluate_node(self.expr, {self.var: s_arr})
        out = np.broadcast_to(np.asarray(out, dtype=float), s_arr.shape)
        return out if out.ndim else float(out)

    def text(self) -> str:
        return to_text(self.expr)

    def __repr__(self):
        return f"ScalarComparisonFn({self.text()!r}, {self.claimed_class.value})"


def _as_fn(f) -> ScalarComparisonFn:
    if isinstance(f, ScalarComparisonFn):
        return f
    if isinstance(f, str):
        return ScalarComparisonFn.parse(f)
    raise TypeError(f"expected a ScalarComparisonFn, got {type(f).__name__}")


def evaluate(fn: ScalarComparisonFn, s: float) -> float:
    """Evaluate at one point, raising :class:`DomainError` if undefined."""
    if not s >= 0:
        raise DomainError(f"argument must be nonnegative, got {s}")
    value = fn(float(s))
    if not math.isfinite(value):
        raise DomainError(f"{fn.text()} is undefined at s={s} (got {value})")
    return value


# ---------------------------------------------------------------------------
# validation

@dataclass
class CheckEntry:
    name: str
    passed: bool
    worst_margin: float
    detail: str = ""


@dataclass
class ValidationReport:
    claimed_class: str
    entries: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def failures(self):
        return [e for e in self.entries if not e.passed]

    def __str__(self):
        lines = [f"class {self.claimed_class}: {'pass' if self.passed else 'FAIL'}"]
        for e in self.entries:
            lines.append(f"  {e.name}: {'pass' if e.passed else 'FAIL'} "
                         f"(worst margin {e.worst_margin:.3g}) {e.detail}".rstrip())
        return "\n".join(lines)


def _doubling_values(fn, cap, stop):
    # stop at the first hit so composed inverses are not pushed past their range
    s = 1.0
    args, vals = [], []
    while s <= cap:
        v = float(fn(s))
        args.append(s)
        vals.append(v)
        if stop(v):
            break
        s *= 2.0
    return np.array(args), np.array(vals)


def validate_class(fn: ScalarComparisonFn, grid: Sequence[float] | None = None,
                   claimed=None, unbounded_threshold: float = 1e3,
                   decay_threshold: float = 1e-3) -> ValidationReport:
    """Sampled class checks; failures are entries in the report, not errors.

    K-infinity is probed by doubling the argument from 1 up to 2^60 and
    requiring the value to exceed ``unbounded_threshold``; class L requires
    the doubled values to fall below ``decay_threshold``.
    """
    cls = FnClass(claimed) if claimed is not None else fn.claimed_class
    grid = np.unique(np.asarray(DEFAULT_GRID if grid is None else grid, dtype=float))
    if grid.size < 2:
        raise ValueError("validation grid needs at least two points")
    report = ValidationReport(cls.value)
    vals = np.asarray(fn(grid), dtype=float)

    finite = np.isfinite(vals)
    report.entries.append(CheckEntry(
        "finite", bool(finite.all()), float(np.sum(~finite)),
        "" if finite.all() else f"non-finite at s={grid[~finite][:3].tolist()}"))

    if cls in (FnClass.PD, FnClass.K, FnClass.KINF):
        at0 = float(fn(0.0))
        report.entries.append(CheckEntry("zero_at_zero", abs(at0) <= ZERO_TOL, abs(at0)))
        pos = vals[grid > 0]
        margin = float(pos.min()) if pos.size else 0.0
        report.entries.append(CheckEntry("positive", bool(np.all(pos > 0)), margin))
    if cls in (FnClass.K, FnClass.KINF):
        diffs = np.diff(vals)
        report.entries.append(CheckEntry(
            "strictly_increasing", bool(np.all(diffs > 0)), float(diffs.min())))
    if cls is FnClass.KINF:
        args, dv = _doubling_values(fn, PROBE_CAP, lambda v: v > unbounded_threshold)
        hit = np.nonzero(dv > unbounded_threshold)[0]
        top = float(dv[-1])
        report.entries.append(CheckEntry(
            "unbounded_probe", hit.size > 0, top - unbounded_threshold,
            f"value {top:.6g} at s=2^{int(math.log2(args[-1]))}" if hit.size == 0
            else f"exceeds {unbounded_threshold:g} at s={args[hit[0]]:g}"))
    if cls is FnClass.L:
        diffs = np.diff(vals)
        report.entries.append(CheckEntry(
            "nonincreasing", bool(np.all(diffs <= 0)), float(-diffs.max())))
        report.entries.append(CheckEntry(
            "nonnegative", bool(np.all(vals >= 0)), float(vals.min())))
        args, dv = _doubling_values(fn, PROBE_CAP, lambda v: abs(v) < decay_threshold)
        hit = np.nonzero(np.abs(dv) < decay_threshold)[0]
        report.entries.append(CheckEntry(
            "decay_probe", hit.size > 0, decay_threshold - float(abs(dv[-1]))))
    return report


def require_class(fn: ScalarComparisonFn, cls, name: str = "function", grid=None):
    report = validate_class(fn, grid, claimed=cls)
    if not report.passed:
        raise ClassValidationError(
            f"{name} = {fn.text()} is not class {FnClass(cls).value}:\n{report}", report)
    return report


# ---------------------------------------------------------------------------
# inversion

def _bracket(fn, y, cap):
    hi = 1.0
    while float(fn(hi)) < y:
        hi *= 2.0
        if hi > cap:
            raise RangeError(f"{y} not reached by {fn.text()} below s={cap:g}")
    return hi


def invert(fn: ScalarComparisonFn, y: float, tol: float = 1e-10,
           cap: float = INVERT_CAP) -> float:
    """Solve ``fn(s) = y`` for an increasing ``fn`` by doubling + bisection.

    Returns ``s`` with ``|fn(s) - y| <= tol * max(1, y)``; bisection continues
    past that to the last representable midpoint, so the root is tight.
    """
    if not y >= 0:
        raise DomainError(f"inverse argument must be nonnegative, got {y}")
    if y == 0.0:
        return 0.0
    if float(fn(0.0)) > y:
        raise RangeError(f"{y} is below {fn.text()} at 0")
    lo, hi = 0.0, _bracket(fn, y, cap)
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if float(fn(mid)) < y:
            lo = mid
        else:
            hi = mid
    s = hi if abs(float(fn(hi)) - y) <= abs(float(fn(lo)) - y) else lo
    if abs(float(fn(s)) - y) > tol * max(1.0, y):
        raise RangeError(f"could not invert {fn.text()} at {y} to tolerance {tol}")
    return s


def _vector_inverse(fn, tol, cap=INVERT_CAP):
    # same doubling + bisection as invert(), run over all elements at once
    def inv(y):
        y = np.asarray(y, dtype=float)
        flat = y.reshape(-1).copy()
        out = np.full_like(flat, np.nan)
        out[flat == 0.0] = 0.0
        out[np.isposinf(flat)] = np.inf
        active = np.nonzero(np.isfinite(flat) & (flat > 0))[0]
        if active.size == 0:
            return out.reshape(y.shape)
        target = flat[active]
        lo = np.zeros_like(target)
        hi = np.ones_like(target)
        short = np.asarray(fn(hi), dtype=float) < target
        while short.any():
            hi[short] *= 2.0
            if hi.max() > cap:
                bad = target[hi > cap][0]
                raise RangeError(f"{bad} not reached by {fn.text()} below s={cap:g}")
            short = np.asarray(fn(hi), dtype=float) < target
        live = np.ones(target.shape, dtype=bool)
        for _ in range(2000):
            mid = 0.5 * (lo + hi)
            live &= (mid > lo) & (mid < hi)
            if not live.any():
                break
            below = np.asarray(fn(mid), dtype=float) < target
            lo = np.where(live & below, mid, lo)
            hi = np.where(live & ~below, mid, hi)
        err_hi = np.abs(np.asarray(fn(hi), dtype=float) - target)
        err_lo = np.abs(np.asarray(fn(lo), dtype=float) - target)
        root = np.where(err_hi <= err_lo, hi, lo)
        err = np.minimum(err_hi, err_lo)
        if np.any(err > tol * np.maximum(1.0, target)):
            raise RangeError(f"could not invert {fn.text()} to tolerance {tol}")
        out[active] = root
        return out.reshape(y.shape)
    return inv


def inverse(fn: ScalarComparisonFn, tol: float = 1e-10) -> ScalarComparisonFn:
    """The inverse of a class-K function as a (numerically evaluated) function."""
    node = Opaque(f"inv[{fn.text()}]", _vector_inverse(fn, tol), (Var("s"),))
    cls = fn.claimed_class if fn.claimed_class in (FnClass.K, FnClass.KINF) \
        else FnClass.UNCLASSIFIED
    return ScalarComparisonFn(node, cls)


# ---------------------------------------------------------------------------
# algebra

def _combined_class(classes: Iterable[FnClass]) -> FnClass:
    classes = set(classes)
    if classes == {FnClass.KINF}:
        return FnClass.KINF
    if classes <= {FnClass.K, FnClass.KINF}:
        return FnClass.K
    return FnClass.UNCLASSIFIED


def compose(f, g) -> ScalarComparisonFn:
    """``f o g`` by structural substitution of ``g`` into ``f``."""
    f, g = _as_fn(f), _as_fn(g)
    node = substitute(f.expr, {f.var: substitute(g.expr, {g.var: Var("s")})})
    return ScalarComparisonFn(node, _combined_class([f.claimed_class, g.claimed_class]))


def pointwise_combine(kind: str, f, g) -> ScalarComparisonFn:
    """Pointwise ``max``, ``min`` or ``sum`` of two functions."""
    f, g = _as_fn(f), _as_fn(g)
    a = substitute(f.expr, {f.var: Var("s")})
    b = substitute(g.expr, {g.var: Var("s")})
    if kind == "max":
        node = Call("max", (a, b))
    elif kind == "min":
        node = Call("min", (a, b))
    elif kind == "sum":
        node = BinOp("+", a, b)
    else:
        raise ValueError(f"unknown combination {kind!r}")
    pair = [f.claimed_class, g.claimed_class]
    if kind == "sum" and FnClass.KINF in pair and set(pair) <= {FnClass.K, FnClass.KINF}:
        cls = FnClass.KINF
    elif kind == "max" and FnClass.KINF in pair and set(pair) <= {FnClass.K, FnClass.KINF}:
        cls = FnClass.KINF
    else:
        cls = _combined_class(pair)
    return ScalarComparisonFn(node, cls)


def scale(c: float, f) -> ScalarComparisonFn:
    """``c * f`` for ``c > 0``; class is kept."""
    f = _as_fn(f)
    if not c > 0:
        raise ValueError("scale factor must be positive")
    node = BinOp("*", Num(float(c)), substitute(f.expr, {f.var: Var("s")}))
    return ScalarComparisonFn(node, f.claimed_class)


def majorize_to_kinf(h, grid=None, tol: float = 1e-12) -> ScalarComparisonFn:
    """K-infinity majorant ``s + (1/s) * integral_s^2s h``, with value 0 at 0.

    ``h`` must be nondecreasing with ``h(0) = 0``; the integral uses adaptive
    quadrature, so the result dominates ``h`` and is strictly increasing.
    """
    h = _as_fn(h)
    grid = np.asarray(DEFAULT_GRID if grid is None else grid, dtype=float)
    vals = h(grid)
    if abs(float(h(0.0))) > tol:
        raise ClassValidationError(f"h(0) = {float(h(0.0))} is not zero")
    if np.any(np.diff(vals) < -tol):
        i = int(np.argmin(np.diff(vals)))
        raise ClassValidationError(
            f"h = {h.text()} decreases between s={grid[i]:g} and s={grid[i + 1]:g}")

    def scalar(h_fn, s):
        if s <= 0.0:
            return 0.0
        value, _ = integrate.quad(lambda tau: float(h_fn(tau)), s, 2.0 * s,
                                  limit=200, epsabs=1e-13, epsrel=1e-12)
        return s + value / s

    def majorant(s):
        s = np.asarray(s, dtype=float)
        flat = s.reshape(-1)
        out = np.array([scalar(h, float(v)) for v in flat])
        return out.reshape(s.shape)

    node = Opaque(f"maj[{h.text()}]", majorant, (Var("s"),))
    return ScalarComparisonFn(node, FnClass.KINF)


# ---------------------------------------------------------------------------
# KL / KLL

def _broadcast_eval(expr, env, extended):
    arrays = {k: np.asarray(v, dtype=float) for k, v in env.items()}
    shape = np.broadcast_shapes(*(a.shape for a in arrays.values()))
    out = np.asarray(evaluate_node(expr, arrays), dtype=float)
    out = np.array(np.broadcast_to(out, shape), dtype=float)
    if extended:
        out[np.isnan(out)] = np.inf
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class KLFn:
    """Two-argument bound ``(s, t) -> value``.

    ``extended`` marks bounds that may be ``+inf`` (e.g. carrying ``s/t``);
    nan from ``0/0`` is then read as ``+inf``.
    """

    expr: Node
    extended: bool = False

    @classmethod
    def parse(cls, text: str, extended: bool = False):
        node = parse_expression(text)
        node = substitute(node, {"z": Var("t")})
        extra = free_vars(node) - {"s", "t"}
        if extra:
            raise NameError(f"unexpected variable(s) {sorted(extra)} in {text!r}")
        return cls(node, extended)

    def __call__(self, s, t):
        return _broadcast_eval(self.expr, {"s": s, "t": t}, self.extended)

    def text(self) -> str:
        return to_text(self.expr)

    def __repr__(self):
        return f"KLFn({self.text()!r})"


@dataclass(frozen=True, eq=False)
class KLLFn:
    """Three-argument hybrid bound ``(s, t, j) -> value``."""

    expr: Node
    extended: bool = False

    @classmethod
    def parse(cls, text: str, extended: bool = False):
        node = parse_expression(text)
        extra = free_vars(node) - {"s", "t", "j"}
        if extra:
            raise NameError(f"unexpected variable(s) {sorted(extra)} in {text!r}")
        return cls(node, extended)

    def __call__(self, s, t, j):
        return _broadcast_eval(self.expr, {"s": s, "t": t, "j": j}, self.extended)

    def text(self) -> str:
        return to_text(self.expr)

    def __repr__(self):
        return f"KLLFn({self.text()!r})"


def kl_to_kll(bt: KLFn) -> KLLFn:
    """``beta(s, t, j) := bt(s, t + j)``; equality is exact."""
    node = substitute(bt.expr, {"t": BinOp("+", Var("t"), Var("j"))})
    return KLLFn(node, bt.extended)


def kll_to_kl(b: KLLFn) -> KLFn:
    """``bt(s, z) := b(s, z/2, 0) + b(s, 0, z/2)``, dominating ``b(s, t, j)``
    at ``z = t + j``."""
    half = BinOp("/", Var("t"), Num(2.0))
    node = BinOp("+",
                 substitute(b.expr, {"t": half, "j": Num(0.0)}),
                 substitute(b.expr, {"t": Num(0.0), "j": half}))
    return KLFn(node, b.extended)


def validate_kl(bt: KLFn, s_grid=None, t_grid=None) -> ValidationReport:
    """Sampled KL checks: K in s for each t, nonincreasing to 0 in t for each s."""
    s_grid = np.linspace(0.0, 10.0, 41) if s_grid is None else np.asarray(s_grid, float)
    t_grid = np.linspace(0.0, 20.0, 41) if t_grid is None else np.asarray(t_grid, float)
    report = ValidationReport("KL")
    S, T = np.meshgrid(s_grid, t_grid, indexing="ij")
    vals = np.asarray(bt(S, T), dtype=float)
    at0 = np.abs(vals[s_grid == 0]).max() if np.any(s_grid == 0) else 0.0
    report.entries.append(CheckEntry("zero_at_s0", at0 <= ZERO_TOL, float(at0)))
    ds = np.diff(vals, axis=0)
    report.entries.append(CheckEntry("increasing_in_s", bool(np.all(ds > 0)), float(ds.min())))
    dt = np.diff(vals, axis=1)
    report.entries.append(CheckEntry("nonincreasing_in_t", bool(np.all(dt <= 0)),
                                     float(-dt.max())))
    big_t = 2.0 ** np.arange(0, 61)
    tail = np.asarray(bt(s_grid.max(), big_t), dtype=float)
    report.entries.append(CheckEntry("decays_in_t", bool(np.any(tail < 1e-3)),
                                     float(1e-3 - tail.min())))
    return report


def validate_kll(b: KLLFn, s_grid=None, t_grid=None, j_grid=None) -> ValidationReport:
    """KLL checks via the (s,t) slices at each sampled j and (s,j) slices at each t."""
    s_grid = np.linspace(0.0, 10.0, 21) if s_grid is None else np.asarray(s_grid, float)
    t_grid = np.linspace(0.0, 10.0, 11) if t_grid is None else np.asarray(t_grid, float)
    j_grid = np.arange(0.0, 11.0) if j_grid is None else np.asarray(j_grid, float)
    report = ValidationReport("KLL")
    for jv in j_grid:
        sub = validate_kl(KLFn(substitute(b.expr, {"j": Num(float(jv))}), b.extended),
                          s_grid, t_grid)
        for e in sub.entries:
            report.entries.append(CheckEntry(f"j={jv:g}:{e.name}", e.passed, e.worst_margin))
    for tv in t_grid:
        node = substitute(b.expr, {"t": Num(float(tv))})
        node = substitute(node, {"j": Var("t")})
        sub = validate_kl(KLFn(node, b.extended), s_grid, j_grid)
        for e in sub.entries:
            report.entries.append(CheckEntry(f"t={tv:g}:{e.name}", e.passed, e.worst_margin))
    return report
