"""Hybrid system models ``H(C, D, F, G)`` with single-valued selections.

Flow and jump sets are sublevel sets of continuous guards,
``C = {c(x, u) <= 0}`` and ``D = {d(x, u) <= 0}``.  Maps and guards are
expression trees; each is compiled once to a scalar kernel (numba when
enabled) for the simulator and is evaluated with numpy for grids.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from . import _accel
from .expr import (Node, ParseError, Piecewise, evaluate_node, free_vars, parse_expression,
                   to_scalar_source, to_text)

__all__ = [
    "SystemSpecError", "ProperIndicator", "HybridSystem", "make_system",
    "bad_example", "decay_jump_demo", "linear_example", "in_C", "in_D",
    "eval_flow", "eval_jump", "omega",
]

DEFAULT_EVENT_TOL = 1e-9


class SystemSpecError(ValueError):
    """Bad system description; ``field`` names the offending entry."""

    def __init__(self, message: str, field: str | None = None, position: int | None = None):
        self.field = field
        self.position = position
        where = f"{field}: " if field else ""
        super().__init__(where + message)


# ---------------------------------------------------------------------------
# proper indicators

@dataclass(frozen=True, eq=False)
class ProperIndicator:
    """Euclidean distance to a compact box ``A = [lo, hi]`` (a point if lo == hi)."""

    kind: str
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if self.kind not in ("point", "box", "interval"):
            raise SystemSpecError(f"unknown indicator set kind {self.kind!r}", "indicator_set")
        if lo.shape != hi.shape or lo.ndim != 1 or lo.size == 0:
            raise SystemSpecError("lo/hi must be vectors of equal length", "indicator_set")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))) or np.any(lo > hi):
            raise SystemSpecError("the target set must be a nonempty compact box",
                                  "indicator_set")
        if self.kind == "interval" and lo.size != 1:
            raise SystemSpecError("an interval target needs n = 1", "indicator_set")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, at):
        at = np.atleast_1d(np.asarray(at, dtype=float))
        return cls("point", at, at.copy())

    @classmethod
    def box(cls, lo, hi):
        return cls("box", lo, hi)

    @classmethod
    def interval(cls, lo: float, hi: float):
        return cls("interval", [lo], [hi])

    @property
    def dim(self) -> int:
        return self.lo.size

    def __call__(self, x):
        """Distance to ``A`` for one state ``(n,)`` or a batch ``(N, n)``."""
        x = np.asarray(x, dtype=float)
        diff = x - np.clip(x, self.lo, self.hi)
        if x.ndim == 1:
            return float(np.sqrt(np.dot(diff, diff)))
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))

    def to_dict(self) -> dict:
        if self.kind == "point":
            return {"kind": "point", "at": self.lo.tolist()}
        return {"kind": self.kind, "lo": self.lo.tolist(), "hi": self.hi.tolist()}


def omega(ind: ProperIndicator, x) -> float:
    return ind(x)


# ---------------------------------------------------------------------------
# compiled scalar kernels

_COMPILED: dict = {}
_COMPILE_LOCK = threading.Lock()


def _compile(src: str, name: str):
    with _COMPILE_LOCK:
        fn = _COMPILED.get(src)
        if fn is None:
            ns = dict(_accel.SCALAR_HELPERS)
            exec(compile(src, f"<hybrid_iiss:{name}>", "exec"), ns)
            fn = ns[name]
            if _accel.NUMBA_ENABLED:
                fn = _accel.njit(nogil=True)(fn)
            _COMPILED[src] = fn
        return fn


def _varmap(n: int, m: int) -> dict:
    vm = {f"x{k + 1}": f"x[{k}]" for k in range(n)}
    vm.update({f"u{k + 1}": f"u[{k}]" for k in range(m)})
    if n == 1:
        vm["x"] = "x[0]"
    if m == 1:
        vm["u"] = "u[0]"
    return vm


def _map_source(name: str, exprs, n: int, m: int) -> str:
    vm = _varmap(n, m)
    lines = [f"def {name}(x, u, out):"]
    # evaluate into temporaries first so out may alias x
    for k, e in enumerate(exprs):
        lines.append(f"    v{k} = {to_scalar_source(e, vm)}")
    for k in range(len(exprs)):
        lines.append(f"    out[{k}] = v{k}")
    lines.append("    return out")
    return "\n".join(lines) + "\n"


def _guard_source(name: str, expr, n: int, m: int) -> str:
    return f"def {name}(x, u):\n    return {to_scalar_source(expr, _varmap(n, m))}\n"


@dataclass(frozen=True)
class CompiledMaps:
    f: object
    g: object
    c: object
    d: object


# ---------------------------------------------------------------------------
# system

@dataclass(frozen=True, eq=False)
class HybridSystem:
    """Hybrid system with flow/jump selections and a proper indicator.

    ``flow`` and ``jump`` hold one or more selections, each a tuple of ``n``
    expression trees over ``x1..xn`` and ``u1..um`` (``x``/``u`` alias the
    single coordinate when the dimension is 1).
    """

    n: int
    m: int
    flow: tuple
    jump: tuple
    flow_guard: Node
    jump_guard: Node
    indicator: ProperIndicator
    name: str = "system"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def with_indicator(self, indicator: ProperIndicator) -> "HybridSystem":
        if indicator.dim != self.n:
            raise SystemSpecError(f"indicator has dimension {indicator.dim}, system n={self.n}",
                                  "indicator_set")
        return replace(self, indicator=indicator, _cache={})

    def _env(self, X, U) -> dict:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        U = np.asarray(U, dtype=float).reshape(X.shape[0], self.m) if self.m else \
            np.zeros((X.shape[0], 0))
        env = {f"x{k + 1}": X[:, k] for k in range(self.n)}
        env.update({f"u{k + 1}": U[:, k] for k in range(self.m)})
        if self.n == 1:
            env["x"] = X[:, 0]
        if self.m == 1:
            env["u"] = U[:, 0]
        return env

    def _eval_vec(self, exprs, X, U) -> np.ndarray:
        env = self._env(X, U)
        rows = env[next(iter(env))].shape[0]
        with np.errstate(all="ignore"):
            cols = [np.broadcast_to(np.asarray(evaluate_node(e, env), dtype=float), (rows,))
                    for e in exprs]
        return np.stack(cols, axis=1)

    def flow_values(self, X, U, selection: int = 0) -> np.ndarray:
        """Vectorized flow map on a batch ``X (N, n)``, ``U (N, m)``."""
        return self._eval_vec(self.flow[self._sel(self.flow, selection)], X, U)

    def jump_values(self, X, U, selection: int = 0) -> np.ndarray:
        return self._eval_vec(self.jump[self._sel(self.jump, selection)], X, U)

    def flow_guard_values(self, X, U) -> np.ndarray:
        return self._eval_vec((self.flow_guard,), X, U)[:, 0]

    def jump_guard_values(self, X, U) -> np.ndarray:
        return self._eval_vec((self.jump_guard,), X, U)[:, 0]

    @staticmethod
    def _sel(options, selection: int) -> int:
        if not 0 <= selection < len(options):
            if len(options) == 1:
                return 0
            raise IndexError(f"selection {selection} out of range ({len(options)} available)")
        return selection

    def compiled(self, selection: int = 0) -> CompiledMaps:
        """Scalar kernels ``f(x, u, out)``, ``g(x, u, out)``, ``c(x, u)``, ``d(x, u)``."""
        key = ("maps", selection)
        maps = self._cache.get(key)
        if maps is None:
            fs = self.flow[self._sel(self.flow, selection)]
            gs = self.jump[self._sel(self.jump, selection)]
            maps = CompiledMaps(
                f=_compile(_map_source("flow_map", fs, self.n, self.m), "flow_map"),
                g=_compile(_map_source("jump_map", gs, self.n, self.m), "jump_map"),
                c=_compile(_guard_source("flow_guard", self.flow_guard, self.n, self.m),
                           "flow_guard"),
                d=_compile(_guard_source("jump_guard", self.jump_guard, self.n, self.m),
                           "jump_guard"),
            )
            self._cache[key] = maps
        return maps

    def describe(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "m": self.m,
            "flow": [[to_text(e) for e in sel] for sel in self.flow],
            "jump": [[to_text(e) for e in sel] for sel in self.jump],
            "flow_guard": to_text(self.flow_guard),
            "jump_guard": to_text(self.jump_guard),
            "indicator_set": self.indicator.to_dict(),
        }


def _vec(v, size: int, what: str) -> np.ndarray:
    arr = np.zeros(size) if v is None else np.atleast_1d(np.asarray(v, dtype=float))
    if arr.shape != (size,):
        raise ValueError(f"{what} must have length {size}, got shape {arr.shape}")
    return arr


def in_C(sys: HybridSystem, x, u=None, tol: float = 0.0) -> bool:
    return bool(sys.flow_guard_values(_vec(x, sys.n, "x")[None], _vec(u, sys.m, "u")[None])[0]
                <= tol)


def in_D(sys: HybridSystem, x, u=None, tol: float = 0.0) -> bool:
    return bool(sys.jump_guard_values(_vec(x, sys.n, "x")[None], _vec(u, sys.m, "u")[None])[0]
                <= tol)


def eval_flow(sys: HybridSystem, x, u=None, selection: int = 0) -> np.ndarray:
    return sys.flow_values(_vec(x, sys.n, "x")[None], _vec(u, sys.m, "u")[None], selection)[0]


def eval_jump(sys: HybridSystem, x, u=None, selection: int = 0) -> np.ndarray:
    return sys.jump_values(_vec(x, sys.n, "x")[None], _vec(u, sys.m, "u")[None], selection)[0]


# ---------------------------------------------------------------------------
# construction

_SYSTEM_KEYS = {"name", "n", "m", "flow", "jump", "flow_guard", "jump_guard", "indicator_set"}


def _parse_field(text, field_name: str, allowed: set) -> Node:
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        text = repr(float(text))
    if not isinstance(text, str):
        raise SystemSpecError(f"expected an expression string, got {type(text).__name__}",
                              field_name)
    try:
        node = parse_expression(text)
    except ParseError as exc:
        raise SystemSpecError(str(exc), field_name, exc.position) from None
    unknown = free_vars(node) - allowed
    if unknown:
        raise SystemSpecError(f"unknown variable(s) {sorted(unknown)} in {text!r}", field_name)
    return node


def _selections(raw, field_name: str, n: int, allowed: set) -> tuple:
    if isinstance(raw, str):
        raw = [raw]
    if not isinstance(raw, Sequence) or not raw:
        raise SystemSpecError("expected a list of expressions", field_name)
    # a list of lists means several selections
    groups = raw if all(isinstance(r, (list, tuple)) for r in raw) else [raw]
    out = []
    for gi, group in enumerate(groups):
        if len(group) != n:
            raise SystemSpecError(f"selection {gi} has {len(group)} outputs for n={n}",
                                  field_name)
        out.append(tuple(_parse_field(e, f"{field_name}[{k}]", allowed)
                         for k, e in enumerate(group)))
    return tuple(out)


def _indicator(raw, n: int) -> ProperIndicator:
    if raw is None:
        return ProperIndicator.point(np.zeros(n))
    if not isinstance(raw, Mapping):
        raise SystemSpecError("expected a mapping", "indicator_set")
    kind = raw.get("kind", "point")
    extra = set(raw) - {"kind", "at", "lo", "hi"}
    if extra:
        raise SystemSpecError(f"unknown key(s) {sorted(extra)}", "indicator_set")
    if kind == "point":
        ind = ProperIndicator.point(raw.get("at", np.zeros(n)))
    elif kind in ("box", "interval"):
        if "lo" not in raw or "hi" not in raw:
            raise SystemSpecError(f"{kind} needs lo and hi", "indicator_set")
        ind = ProperIndicator(kind, raw["lo"], raw["hi"])
    else:
        raise SystemSpecError(f"unknown indicator set kind {kind!r}", "indicator_set")
    if ind.dim != n:
        raise SystemSpecError(f"indicator has dimension {ind.dim}, expected {n}", "indicator_set")
    return ind


def guard_continuity_probe(sys: HybridSystem, radius: float = 10.0, samples: int = 200,
                           seed: int = 0) -> dict:
    """Sampled continuity check of both guards.

    Compares guard increments over random displacements of size 1e-3 and
    1e-7.  For a locally Lipschitz guard the latter shrink by about 1e4; an
    increment that stays large signals a jump discontinuity.
    """
    rng = np.random.default_rng(seed)
    X = rng.uniform(-radius, radius, (samples, sys.n))
    U = rng.uniform(-radius, radius, (samples, sys.m))
    dirs = rng.normal(size=(samples, sys.n + sys.m))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    out = {}
    for name, fn in (("flow_guard", sys.flow_guard_values), ("jump_guard", sys.jump_guard_values)):
        base = fn(X, U)
        jumps = []
        for h in (1e-3, 1e-7):
            Xh = X + h * dirs[:, :sys.n]
            Uh = U + h * dirs[:, sys.n:]
            jumps.append(np.abs(fn(Xh, Uh) - base))
        # random points never land on a piecewise threshold, so probe those directly
        for col, is_x, lit in _thresholds(getattr(sys, name), sys.n, sys.m):
            for side in (-1e-9, 1e-9):
                Xa, Ua = X.copy(), U.copy()
                (Xa if is_x else Ua)[:, col] = lit
                Xb, Ub = Xa.copy(), Ua.copy()
                (Xb if is_x else Ub)[:, col] = lit + side
                jumps.append(np.abs(fn(Xb, Ub) - fn(Xa, Ua)))
        probe = np.concatenate(jumps[1:])
        ok = np.isfinite(probe)
        worst = float(np.max(probe[ok])) if np.any(ok) else 0.0
        out[name] = {"max_increment_1e-7": worst, "continuous": worst <= 1e-3}
    return out


def _thresholds(node, n: int, m: int):
    """``(column, is_state, literal)`` for every piecewise condition in ``node``."""
    found = []

    def walk(e):
        if isinstance(e, Piecewise):
            v = e.var
            if v == "x" and n == 1:
                found.append((0, True, e.literal))
            elif v == "u" and m == 1:
                found.append((0, False, e.literal))
            elif v[:1] in "xu" and v[1:].isdigit():
                found.append((int(v[1:]) - 1, v[0] == "x", e.literal))
        for child in getattr(e, "__dict__", {}).values():
            for c in child if isinstance(child, tuple) else (child,):
                if isinstance(c, Node):
                    walk(c)

    walk(node)
    return found


def make_system(spec: Mapping) -> HybridSystem:
    """Build and validate a system from a plain mapping (a scenario's system block)."""
    if not isinstance(spec, Mapping):
        raise SystemSpecError("system block must be a mapping")
    extra = set(spec) - _SYSTEM_KEYS
    if extra:
        raise SystemSpecError(f"unknown key(s) {sorted(extra)}", "system")
    try:
        n = int(spec["n"])
    except KeyError:
        raise SystemSpecError("missing state dimension", "n") from None
    m = int(spec.get("m", 0))
    if n < 1 or m < 0:
        raise SystemSpecError(f"invalid dimensions n={n}, m={m}", "n")
    allowed = set(_varmap(n, m))
    if "flow" not in spec:
        raise SystemSpecError("missing flow map", "flow")
    flow = _selections(spec["flow"], "flow", n, allowed)
    jump_raw = spec.get("jump", [f"x{k + 1}" for k in range(n)])
    jump = _selections(jump_raw, "jump", n, allowed)
    c = _parse_field(spec.get("flow_guard", "-1"), "flow_guard", allowed)
    d = _parse_field(spec.get("jump_guard", "1"), "jump_guard", allowed)
    sys = HybridSystem(n, m, flow, jump, c, d, _indicator(spec.get("indicator_set"), n),
                       str(spec.get("name", "system")))
    probe = guard_continuity_probe(sys)
    for name, res in probe.items():
        if not res["continuous"]:
            raise SystemSpecError("guard appears discontinuous (sampled increment "
                                  f"{res['max_increment_1e-7']:.3g} at scale 1e-7)", name)
    return sys


def bad_example() -> HybridSystem:
    """``x' = -x (x - 1)^2 + u``, pure flow, ``A = {0}``."""
    return make_system({
        "name": "bad_example", "n": 1, "m": 1,
        "flow": ["-x1*(x1-1)^2 + u1"],
        "flow_guard": "-1", "jump_guard": "1",
        "indicator_set": {"kind": "point", "at": [0.0]},
    })


def decay_jump_demo() -> HybridSystem:
    """``x' = x`` on ``x <= 1``, ``x+ = x/2`` on ``x >= 1``, no input."""
    return make_system({
        "name": "decay_jump_demo", "n": 1, "m": 0,
        "flow": ["x1"], "jump": ["x1/2"],
        "flow_guard": "x1 - 1", "jump_guard": "1 - x1",
        "indicator_set": {"kind": "point", "at": [0.0]},
    })


def linear_example(a: float = 1.0) -> HybridSystem:
    """``x' = -a x + u``, pure flow, ``A = {0}``."""
    return make_system({
        "name": "linear", "n": 1, "m": 1,
        "flow": [f"-{float(a)!r}*x1 + u1"],
        "indicator_set": {"kind": "point", "at": [0.0]},
    })
