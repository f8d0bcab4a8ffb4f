"""Randomized search for trajectories that violate a claimed estimate.

A run samples initial states and piecewise-constant inputs, simulates,
checks, then perturbs the worst witness coordinate by coordinate.  A clean
run only means that no violation was found within the budget.
"""
from __future__ import annotations

import math
import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .hybrid_time import InputSchedule
from .sampling import random_schedule
from .simulator import SimOptions, SimulationError, simulate
from .stability.report import DEFAULT_CHECK_TOL, CheckReport
from .stability.spec import EstimateSpec, SpecError
from .system import HybridSystem

__all__ = ["SimulationCache", "SamplerConfig", "Witness", "FalsificationReport", "falsify",
           "refine", "replay"]


@dataclass(frozen=True)
class SamplerConfig:
    x0_lo: tuple
    x0_hi: tuple
    level_lo: tuple = ()
    level_hi: tuple = ()
    switches: tuple = (0, 3)
    trials: int = 100
    seed: int = 0
    refine_rounds: int = 3
    refine_shrink: float = 0.5
    workers: int = 1
    n_jump_levels: int = 0
    check_tol: float = DEFAULT_CHECK_TOL

    def __post_init__(self):
        for name in ("x0_lo", "x0_hi", "level_lo", "level_hi"):
            object.__setattr__(self, name, tuple(float(v) for v in np.atleast_1d(
                getattr(self, name))))
        if len(self.x0_lo) != len(self.x0_hi) or not self.x0_lo:
            raise ValueError("x0 box needs matching nonempty lo/hi")
        if len(self.level_lo) != len(self.level_hi):
            raise ValueError("input box needs matching lo/hi")
        if any(a > b for a, b in zip(self.x0_lo + self.level_lo, self.x0_hi + self.level_hi)):
            raise ValueError("box bounds must satisfy lo <= hi")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.switches[0] < 0 or self.switches[0] > self.switches[1]:
            raise ValueError(f"bad switch range {self.switches}")
        if not 0 < self.refine_shrink < 1:
            raise ValueError("refine_shrink must lie in (0, 1)")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


@dataclass(frozen=True, eq=False)
class Witness:
    x0: np.ndarray
    schedule: InputSchedule
    trial: int
    seed: int

    def to_dict(self) -> dict:
        return {"x0": [float(v) for v in self.x0], "input": self.schedule.to_dict(),
                "trial": self.trial, "seed": self.seed}


@dataclass(eq=False)
class FalsificationReport:
    best: CheckReport | None
    witness: Witness | None
    n_trials: int
    histogram: dict
    errors: list = field(default_factory=list)
    refine_history: list = field(default_factory=list)
    initial_residual: float = -math.inf

    @property
    def violation_found(self) -> bool:
        return self.best is not None and self.best.violated

    @property
    def max_residual(self) -> float:
        return self.best.max_residual if self.best is not None else -math.inf

    def to_dict(self) -> dict:
        def num(v):
            return float(v) if math.isfinite(v) else None
        return {
            "violation_found": self.violation_found,
            "claim": "violation found" if self.violation_found
            else "no violation found within budget",
            "max_residual": num(self.max_residual),
            "initial_residual": num(self.initial_residual),
            "n_trials": self.n_trials,
            "n_errors": len(self.errors),
            "errors": self.errors,
            "histogram": self.histogram,
            "refine_history": [num(v) for v in self.refine_history],
            "witness": self.witness.to_dict() if self.witness else None,
            "best": self.best.to_dict(samples=False) if self.best else None,
        }


class SimulationCache:
    """Small LRU of simulations keyed by (x0, input, options)."""

    def __init__(self, size: int = 8):
        self.size = size
        self.data: OrderedDict = OrderedDict()
        self.lock = threading.Lock()

    def get(self, sys, x0, sched, opts):
        key = (id(sys), np.asarray(x0, float).tobytes(), sched.key(), opts)
        with self.lock:
            if key in self.data:
                self.data.move_to_end(key)
                return self.data[key]
        sol = simulate(sys, x0, sched, opts)
        with self.lock:
            self.data[key] = sol
            while len(self.data) > self.size:
                self.data.popitem(last=False)
        return sol


def _evaluate(sys, spec, omega, x0, sched, opts, tol, cache) -> CheckReport:
    sol = cache.get(sys, x0, sched, opts) if cache else simulate(sys, x0, sched, opts)
    return spec.check([sol], omega, tol)


def _draw(cfg: SamplerConfig, sys: HybridSystem, trial: int, horizon_T: float):
    rng = np.random.default_rng(cfg.seed + trial)
    x0 = rng.uniform(cfg.x0_lo, cfg.x0_hi)
    lo = cfg.level_lo or (0.0,) * sys.m
    hi = cfg.level_hi or (0.0,) * sys.m
    sched = random_schedule(rng, sys.m, lo, hi, cfg.switches, horizon_T, cfg.n_jump_levels)
    return x0, sched


def _histogram(values) -> dict:
    vals = np.asarray([v for v in values if math.isfinite(v)], dtype=float)
    if not vals.size:
        return {"counts": [], "edges": [], "min": None, "max": None, "median": None}
    counts, edges = np.histogram(vals, bins=10)
    return {"counts": counts.tolist(), "edges": [float(e) for e in edges],
            "min": float(vals.min()), "max": float(vals.max()),
            "median": float(np.median(vals))}


def falsify(sys: HybridSystem, spec: EstimateSpec, cfg: SamplerConfig,
            opts: SimOptions | None = None, omega=None,
            cache: SimulationCache | None = None) -> FalsificationReport:
    """Random phase of ``cfg.trials`` simulations, then ``cfg.refine_rounds`` of refinement.

    Trial ``i`` is seeded with ``cfg.seed + i``; results are merged by trial
    index, so the report does not depend on ``cfg.workers``.  Passing one
    ``cache`` to several runs on the same system reuses their simulations.
    """
    if not spec.trajectory_based:
        raise SpecError("pointwise estimates are grid checks, not falsification targets",
                        spec.kind)
    opts = opts or SimOptions()
    omega = omega or sys.indicator
    if len(cfg.x0_lo) != sys.n:
        raise ValueError(f"x0 box has dimension {len(cfg.x0_lo)}, system n={sys.n}")
    cache = cache if cache is not None else SimulationCache()

    def run(trial):
        x0, sched = _draw(cfg, sys, trial, opts.horizon_T)
        try:
            rep = _evaluate(sys, spec, omega, x0, sched, opts, cfg.check_tol, cache)
        except SimulationError as exc:
            return trial, x0, sched, None, f"{type(exc).__name__}: {exc}"
        return trial, x0, sched, rep, None

    # warm the compiled kernels once before going parallel
    sys.compiled(opts.selection)
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(run, range(cfg.trials)))
    else:
        results = [run(i) for i in range(cfg.trials)]

    errors, residuals = [], []
    best = None
    for trial, x0, sched, rep, err in results:
        if err is not None:
            errors.append({"trial": trial, "error": err})
            continue
        residuals.append(rep.max_residual)
        if best is None or rep.max_residual > best[3].max_residual:
            best = (trial, x0, sched, rep)
    if best is None:
        return FalsificationReport(None, None, cfg.trials, _histogram([]), errors)
    trial, x0, sched, rep = best
    witness = Witness(np.asarray(x0, float), sched, trial, cfg.seed + trial)
    initial = rep.max_residual
    ref, witness, history = _refine(sys, spec, witness, rep, cfg, opts, omega, cache)
    return FalsificationReport(ref, witness, cfg.trials, _histogram(residuals), errors,
                               history, initial)


def _box_steps(cfg: SamplerConfig, sys: HybridSystem, sched: InputSchedule, horizon_T: float):
    """``(getter, setter, lo, hi, base_radius)`` per free coordinate."""
    coords = []
    for i in range(sys.n):
        lo, hi = cfg.x0_lo[i], cfg.x0_hi[i]
        if hi > lo:
            coords.append(("x0", i, lo, hi, 0.5 * (hi - lo)))
    lo_l = cfg.level_lo or (0.0,) * sys.m
    hi_l = cfg.level_hi or (0.0,) * sys.m
    for r in range(sched.levels.shape[0]):
        for c in range(sys.m):
            if hi_l[c] > lo_l[c]:
                coords.append(("level", (r, c), lo_l[c], hi_l[c], 0.5 * (hi_l[c] - lo_l[c])))
    nb = sched.breaks.size
    for b in range(nb):
        coords.append(("break", b, 0.0, horizon_T, 0.5 * horizon_T / (nb + 1)))
    if sched.jump_levels is not None:
        for r in range(sched.jump_levels.shape[0]):
            for c in range(sys.m):
                if hi_l[c] > lo_l[c]:
                    coords.append(("jump", (r, c), lo_l[c], hi_l[c],
                                   0.5 * (hi_l[c] - lo_l[c])))
    return coords


def _perturb(x0, sched: InputSchedule, coord, value):
    kind, idx = coord[0], coord[1]
    x0 = np.array(x0, dtype=float)
    breaks, levels = sched.breaks.copy(), sched.levels.copy()
    jumps = None if sched.jump_levels is None else sched.jump_levels.copy()
    if kind == "x0":
        x0[idx] = value
    elif kind == "level":
        levels[idx] = value
    elif kind == "jump":
        jumps[idx] = value
    else:
        breaks[idx] = value
        lo = breaks[idx - 1] if idx > 0 else 0.0
        hi = breaks[idx + 1] if idx + 1 < breaks.size else math.inf
        if not lo < value < hi:
            return None
    return x0, InputSchedule(breaks, levels, jumps)


def _refine(sys, spec, witness: Witness, rep: CheckReport, cfg: SamplerConfig, opts, omega,
            cache):
    history = [rep.max_residual]
    x0, sched = witness.x0, witness.schedule
    for rnd in range(cfg.refine_rounds):
        factor = cfg.refine_shrink ** rnd
        for coord in _box_steps(cfg, sys, sched, opts.horizon_T):
            kind, idx, lo, hi, radius = coord
            current = x0[idx] if kind == "x0" else (
                sched.levels[idx] if kind == "level" else
                sched.jump_levels[idx] if kind == "jump" else sched.breaks[idx])
            for sign in (1.0, -1.0):
                value = float(np.clip(current + sign * factor * radius, lo, hi))
                if value == current:
                    continue
                cand = _perturb(x0, sched, coord, value)
                if cand is None:
                    continue
                try:
                    r2 = _evaluate(sys, spec, omega, cand[0], cand[1], opts, cfg.check_tol,
                                   cache)
                except SimulationError:
                    continue
                if r2.max_residual > rep.max_residual:
                    rep = r2
                    x0, sched = cand
                    break
        history.append(rep.max_residual)
    return rep, Witness(np.asarray(x0, float), sched, witness.trial, witness.seed), history


def refine(sys: HybridSystem, spec: EstimateSpec, witness: Witness, rounds: int,
           shrink: float, opts: SimOptions | None = None, cfg: SamplerConfig | None = None,
           omega=None) -> CheckReport:
    """Keep-if-worse coordinate search around ``witness``; never lowers the residual."""
    opts = opts or SimOptions()
    omega = omega or sys.indicator
    if cfg is None:
        cfg = SamplerConfig(tuple(witness.x0), tuple(witness.x0))
    cfg = SamplerConfig(**{**cfg.__dict__, "refine_rounds": rounds, "refine_shrink": shrink})
    rep = _evaluate(sys, spec, omega, witness.x0, witness.schedule, opts, cfg.check_tol, None)
    out, _, _ = _refine(sys, spec, witness, rep, cfg, opts, omega, SimulationCache())
    return out


def replay(sys: HybridSystem, spec: EstimateSpec, witness: Witness,
           opts: SimOptions | None = None, omega=None,
           tol: float = DEFAULT_CHECK_TOL) -> CheckReport:
    """Re-simulate and re-check a recorded witness."""
    return _evaluate(sys, spec, omega or sys.indicator, witness.x0, witness.schedule,
                     opts or SimOptions(), tol, None)
