"""Scenario files: YAML text parsed into validated domain objects.

Every error carries the line and column of the offending node.  Expressions
stay strings and go through the package's own grammar.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, fields

import numpy as np
import yaml

from .expr import ParseError
from .falsifier import SamplerConfig
from .hybrid_time import InputSchedule
from .simulator import SimOptions
from .stability.spec import KINDS, EstimateSpec, SpecError
from .system import _SYSTEM_KEYS, HybridSystem, SystemSpecError, make_system

__all__ = ["Scenario", "ScenarioError", "load_scenario", "parse_scenario", "Run",
           "schedule_from_mapping"]

_TOP_KEYS = {"seed", "system", "simulation", "initial_state", "input", "runs", "estimates",
             "falsifier", "convert", "output"}
_SIM_KEYS = {f.name for f in fields(SimOptions)}
_FALS_KEYS = {f.name for f in fields(SamplerConfig)} - {"seed"}
_INPUT_KEYS = {"breaks", "levels", "jump_levels"}
_CONVERT_KEYS = {"direction", "beta", "beta_extended", "s", "t", "j"}
_PRIORITY = {"jump": "jump_first", "flow": "flow_first",
             "jump_first": "jump_first", "flow_first": "flow_first"}


class ScenarioError(ValueError):
    """Scenario problem with an optional source location."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None,
                 path: tuple = ()):
        self.line, self.column, self.path = line, column, path
        where = f"line {line}, column {column}: " if line is not None else ""
        key = ".".join(str(p) for p in path if p != "<key>")
        super().__init__(f"{where}{key + ': ' if key else ''}{message}")


def _plain(node, path, marks):
    """Convert a composed YAML node into plain data, recording node marks."""
    marks[path] = (node.start_mark.line + 1, node.start_mark.column + 1)
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = _plain(k, path + ("<key>",), marks)
            if key in out:
                raise ScenarioError(f"duplicate key {key!r}", k.start_mark.line + 1,
                                    k.start_mark.column + 1, path)
            out[key] = _plain(v, path + (key,), marks)
            marks[path + (key, "<key>")] = (k.start_mark.line + 1, k.start_mark.column + 1)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_plain(v, path + (i,), marks) for i, v in enumerate(node.value)]
    return _scalar(node)


def _scalar(node):
    loader = yaml.SafeLoader("")
    try:
        return loader.construct_object(node)
    finally:
        loader.dispose()


@dataclass(frozen=True, eq=False)
class Run:
    x0: np.ndarray
    schedule: InputSchedule


@dataclass(eq=False)
class Scenario:
    system: HybridSystem
    options: SimOptions
    seed: int = 0
    runs: list = field(default_factory=list)
    estimates: list = field(default_factory=list)
    sampler: SamplerConfig | None = None
    convert: dict | None = None
    output: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def with_overrides(self, seed=None, tol=None, priority=None, trials=None, horizon_t=None,
                       horizon_j=None) -> "Scenario":
        """Apply command-line overrides, returning a new scenario."""
        from dataclasses import replace
        opts = self.options
        if priority is not None:
            opts = replace(opts, priority=_PRIORITY[priority])
        if horizon_t is not None:
            opts = replace(opts, horizon_T=float(horizon_t))
        if horizon_j is not None:
            opts = replace(opts, horizon_J=int(horizon_j))
        seed = self.seed if seed is None else int(seed)
        sampler = self.sampler
        if sampler is not None:
            kw = {"seed": seed}
            if trials is not None:
                kw["trials"] = int(trials)
            if tol is not None:
                kw["check_tol"] = float(tol)
            sampler = replace(sampler, **kw)
        return replace(self, options=opts, seed=seed, sampler=sampler)


class _Ctx:
    def __init__(self, marks):
        self.marks = marks

    def error(self, message, path=()):
        path = tuple(path)
        for k in range(len(path), -1, -1):
            if path[:k] in self.marks:
                line, col = self.marks[path[:k]]
                return ScenarioError(message, line, col, path)
        return ScenarioError(message, path=path)

    def mapping(self, value, path, allowed=None):
        if not isinstance(value, dict):
            raise self.error("expected a mapping", path)
        if allowed is not None:
            for k in value:
                if k not in allowed:
                    raise self.error(f"unknown key {k!r}", tuple(path) + (k, "<key>"))
        return value

    def vector(self, value, path, size=None):
        try:
            arr = np.asarray(value, dtype=float).reshape(-1)
        except (TypeError, ValueError):
            raise self.error("expected a list of numbers", path) from None
        if size is not None and arr.size != size:
            raise self.error(f"expected {size} value(s), got {arr.size}", path)
        return arr


def schedule_from_mapping(raw, m: int) -> InputSchedule:
    if raw is None:
        return InputSchedule.zero(m)
    levels = np.asarray(raw.get("levels", [[0.0] * m]), dtype=float)
    levels = levels.reshape(-1, m) if m else np.zeros((levels.shape[0] if levels.ndim else 1, 0))
    jl = raw.get("jump_levels")
    return InputSchedule(raw.get("breaks", []), levels,
                         None if jl is None else np.asarray(jl, dtype=float).reshape(-1, m))


def _schedule(ctx, raw, path, m):
    if raw is None:
        return InputSchedule.zero(m)
    ctx.mapping(raw, path, _INPUT_KEYS)
    try:
        return schedule_from_mapping(raw, m)
    except (TypeError, ValueError) as exc:
        raise ctx.error(f"bad input schedule ({exc})", path) from None


def _system(ctx, raw):
    ctx.mapping(raw, ("system",), _SYSTEM_KEYS)
    if isinstance(raw.get("indicator_set"), dict):
        ctx.mapping(raw["indicator_set"], ("system", "indicator_set"), {"kind", "at", "lo", "hi"})
    try:
        return make_system(raw)
    except SystemSpecError as exc:
        path = ("system",)
        m = re.fullmatch(r"(\w+)(?:\[(\d+)\])?", exc.field or "")
        if m and m.group(1) in raw:
            path += (m.group(1),)
            if m.group(2) is not None and isinstance(raw[m.group(1)], list):
                path += (int(m.group(2)),)
        raise ctx.error(str(exc), path) from None
    except (ParseError, ValueError, TypeError) as exc:
        raise ctx.error(str(exc), ("system",)) from None


def _options(ctx, raw):
    if raw is None:
        return SimOptions()
    ctx.mapping(raw, ("simulation",), _SIM_KEYS)
    kw = dict(raw)
    if "priority" in kw:
        if kw["priority"] not in _PRIORITY:
            raise ctx.error(f"priority must be jump or flow, got {kw['priority']!r}",
                            ("simulation", "priority"))
        kw["priority"] = _PRIORITY[kw["priority"]]
    try:
        for k in ("horizon_J", "zeno_cap", "selection"):
            if k in kw:
                kw[k] = int(kw[k])
        for k in ("step", "event_tol", "horizon_T", "blowup"):
            if k in kw:
                kw[k] = float(kw[k])
        return SimOptions(**kw)
    except (TypeError, ValueError) as exc:
        raise ctx.error(str(exc), ("simulation",)) from None


def _estimates(ctx, raw, sys):
    if raw is None:
        return []
    if not isinstance(raw, list):
        raise ctx.error("expected a list of estimate blocks", ("estimates",))
    out = []
    for i, block in enumerate(raw):
        path = ("estimates", i)
        ctx.mapping(block, path)
        kind = block.get("kind")
        if kind not in KINDS:
            raise ctx.error(f"unknown estimate kind {kind!r} (expected one of "
                            f"{sorted(KINDS)})", path + ("kind",))
        params = {k: v for k, v in block.items() if k != "kind"}
        for k in params:
            if k not in KINDS[kind] and k != "beta_extended":
                raise ctx.error(f"unknown parameter {k!r} for {kind}", path + (k, "<key>"))
        try:
            out.append(EstimateSpec.from_strings(kind, params, sys.n, sys.indicator))
        except SpecError as exc:
            sub = path + ((exc.field,) if exc.field in params else ())
            raise ctx.error(str(exc), sub) from None
        except (ParseError, ValueError) as exc:
            raise ctx.error(str(exc), path) from None
    return out


def _sampler(ctx, raw, seed, sys):
    if raw is None:
        return None
    path = ("falsifier",)
    ctx.mapping(raw, path, _FALS_KEYS)
    kw = dict(raw)
    for k in ("x0_lo", "x0_hi"):
        if k not in kw:
            raise ctx.error(f"missing {k}", path)
        ctx.vector(kw[k], path + (k,), sys.n)
    for k in ("level_lo", "level_hi"):
        kw.setdefault(k, [0.0] * sys.m)
        ctx.vector(kw[k], path + (k,), sys.m)
    if "switches" in kw:
        kw["switches"] = tuple(int(v) for v in kw["switches"])
    try:
        return SamplerConfig(seed=seed, **kw)
    except (TypeError, ValueError) as exc:
        raise ctx.error(str(exc), path) from None


def _runs(ctx, data, sys):
    runs = []
    if "initial_state" in data:
        x0 = ctx.vector(data["initial_state"], ("initial_state",), sys.n)
        runs.append(Run(x0, _schedule(ctx, data.get("input"), ("input",), sys.m)))
    elif "input" in data:
        raise ctx.error("input given without initial_state", ("input",))
    for i, block in enumerate(data.get("runs") or []):
        path = ("runs", i)
        ctx.mapping(block, path, {"x0", "input"})
        if "x0" not in block:
            raise ctx.error("missing x0", path)
        runs.append(Run(ctx.vector(block["x0"], path + ("x0",), sys.n),
                        _schedule(ctx, block.get("input"), path + ("input",), sys.m)))
    return runs


def _convert(ctx, raw):
    if raw is None:
        return None
    path = ("convert",)
    ctx.mapping(raw, path, _CONVERT_KEYS)
    if raw.get("direction") not in ("kl_to_kll", "kll_to_kl"):
        raise ctx.error("direction must be kl_to_kll or kll_to_kl", path + ("direction",))
    if "beta" not in raw:
        raise ctx.error("missing beta", path)
    out = dict(raw)
    for k, default in (("s", [0.0, 5.0, 11]), ("t", [0.0, 5.0, 11]), ("j", [0, 5, 6])):
        v = out.get(k, default)
        if not (isinstance(v, list) and len(v) == 3):
            raise ctx.error("expected [lo, hi, num]", path + (k,))
        out[k] = v
    return out


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    """Parse scenario text.  Raises ScenarioError with a location."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ScenarioError(f"{source}: {exc.problem}", mark.line + 1 if mark else None,
                            mark.column + 1 if mark else None) from None
    if node is None:
        raise ScenarioError(f"{source}: empty scenario")
    marks: dict = {}
    data = _plain(node, (), marks)
    ctx = _Ctx(marks)
    ctx.mapping(data, (), _TOP_KEYS)
    if "system" not in data:
        raise ctx.error("missing system block")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ctx.error("seed must be a nonnegative integer", ("seed",))
    sys = _system(ctx, data["system"])
    output = ctx.mapping(data.get("output") or {}, ("output",), {"dir"})
    return Scenario(
        system=sys, options=_options(ctx, data.get("simulation")), seed=seed,
        runs=_runs(ctx, data, sys), estimates=_estimates(ctx, data.get("estimates"), sys),
        sampler=_sampler(ctx, data.get("falsifier"), seed, sys),
        convert=_convert(ctx, data.get("convert")), output=dict(output), raw=data)


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read(), str(path))
