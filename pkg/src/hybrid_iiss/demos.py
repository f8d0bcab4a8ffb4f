"""Reproduction runs for the scalar counterexample and the jump demo.

Each function returns plain JSON-ready data with no timings, so that two
runs with the same seed serialize to identical bytes.
"""
from __future__ import annotations

import math

import numpy as np

from .comparison import FnClass, KLFn, ScalarComparisonFn
from .falsifier import SamplerConfig, SimulationCache, falsify
from .hybrid_time import HybridTimeDomain, InputSchedule
from .sampling import random_schedule
from .simulator import SimOptions, simulate
from .stability import (ALPHA_TEXT, SIGMA_TEXT, EstimateSpec, GridSpec, ScalarField,
                        bad_example_local_cert, bad_example_practical_cert,
                        check_local_iiss, check_pointwise_dissipation, check_practical_iiss,
                        energy_profile)
from .system import ProperIndicator, bad_example, decay_jump_demo

__all__ = ["X100_BOUNDS", "simulate_x100", "practical_suite", "pointwise_suite", "local_suite",
           "impulse_counterexample", "zero_ugas_grid", "bad_example_reproduction",
           "jump_demo", "summary_lines", "practical_runs", "local_runs"]

# comparison-principle enclosure of x(100) from x0 = 2, u = 0
X100_BOUNDS = (1.00497, 1.00991)


def _f(v):
    v = float(v)
    return v if math.isfinite(v) else None


def simulate_x100(sys=None, step: float = 1e-3) -> float:
    sys = sys or bad_example()
    sol = simulate(sys, [2.0], None, SimOptions(step=step, horizon_T=100.0))
    return float(sol.arc.terminal_state[0])


def practical_runs(sys, n: int, seed: int = 0, horizon_T: float = 20.0):
    """Random trajectories for the practical suite: x0 in [-5, 5], levels in [-1, 1]."""
    opts = SimOptions(horizon_T=horizon_T)
    sols = []
    for i in range(n):
        rng = np.random.default_rng(seed + i)
        x0 = rng.uniform(-5.0, 5.0)
        sched = random_schedule(rng, 1, -1.0, 1.0, (0, 5), horizon_T)
        sols.append(simulate(sys, [x0], sched, opts))
    return sols


def practical_suite(n: int = 200, seed: int = 0, tol: float = 1e-4, sys=None):
    sys = sys or bad_example()
    cert = bad_example_practical_cert()
    sols = practical_runs(sys, n, seed)
    return check_practical_iiss(sols, cert.beta, cert.chi, cert.gamma, cert.p, sys.indicator,
                                tol)


def pointwise_suite(V_text: str = "w^2", num: int = 101, tol: float = 1e-6, sys=None):
    """Pointwise flow dissipation on ``[-5, 5]^2`` with omega = distance to [-1, 1]."""
    sys = sys or bad_example()
    ind = ProperIndicator.interval(-1.0, 1.0)
    V = ScalarField.parse(V_text, 1, ind)
    rho = ScalarComparisonFn.parse(ALPHA_TEXT, FnClass.KINF)
    lam = ScalarComparisonFn.parse(SIGMA_TEXT, FnClass.KINF)
    grid = GridSpec(((-5.0, 5.0, num),), ((-5.0, 5.0, num),))
    return check_pointwise_dissipation(sys, V, rho, lam, ind, grid, tol)


def local_runs(sys, cert, n: int, seed: int = 0, horizon_T: float = 10.0):
    """In-gate trajectories: ``|x0| <= l`` and input energy drawn uniformly in ``[0, l]``.

    A random schedule is rescaled so its energy hits the drawn target; gamma
    is linear, so scaling the levels scales the energy.
    """
    opts = SimOptions(horizon_T=horizon_T)
    dom = HybridTimeDomain(((0.0, horizon_T),))
    sols = []
    for i in range(n):
        rng = np.random.default_rng(seed + i)
        x0 = rng.uniform(-cert.l, cert.l)
        sched = random_schedule(rng, 1, -1.0, 1.0, (0, 5), horizon_T)
        e = energy_profile(sched.realize(dom), cert.gamma, [horizon_T], [0])[0]
        target = rng.uniform(0.0, cert.l)
        if e > 0:
            sched = InputSchedule(sched.breaks, sched.levels * (target / e))
        sols.append(simulate(sys, [x0], sched, opts))
    return sols


def local_suite(n: int = 200, seed: int = 0, tol: float = 1e-4, l: float = 0.5, sys=None):
    """Returns ``(report, max |x| over in-gate trajectories, r)``."""
    sys = sys or bad_example()
    cert = bad_example_local_cert(l)
    sols = local_runs(sys, cert, n, seed)
    rep = check_local_iiss(sols, cert.beta, cert.chi, cert.gamma, cert.l, sys.indicator, tol)
    gate = set(rep.extra.get("out_of_gate_indices", []))
    peak = max((float(np.abs(s.arc.states).max()) for i, s in enumerate(sols) if i not in gate),
               default=0.0)
    return rep, peak, cert.r


def impulse_counterexample(l: float = 0.5, sys=None):
    """An in-gate input that spends its whole energy budget in a short burst.

    From ``x0 = l`` a level of 37.5 for 0.01 time units has energy exactly
    ``l`` when ``l = 0.5``; the state overshoots ``r`` while the local
    estimate itself still holds.
    """
    sys = sys or bad_example()
    cert = bad_example_local_cert(l)
    sol = simulate(sys, [l], InputSchedule([0.01], [[37.5], [0.0]]), SimOptions(horizon_T=10.0))
    rep = check_local_iiss([sol], cert.beta, cert.chi, cert.gamma, cert.l, sys.indicator, 1e-4)
    e = energy_profile(sol.input, cert.gamma, [10.0], [0])[0]
    return {"x0": l, "energy": _f(e), "max_abs_x": _f(np.abs(sol.arc.states).max()),
            "r": _f(cert.r), "in_gate": int(rep.extra["in_gate"]),
            "estimate_max_residual": _f(rep.max_residual)}


def zero_ugas_grid(seed: int = 0, horizon_T: float = 500.0, trials: int = 3,
                   refine_rounds: int = 1, sys=None):
    """Falsify ``C s exp(-lam t)`` for C in 1..10 and 10 rates in [0.01, 1]."""
    sys = sys or bad_example()
    cfg = SamplerConfig((1.5,), (3.0,), (0.0,), (0.0,), (0, 0), trials=trials, seed=seed,
                        refine_rounds=refine_rounds)
    opts = SimOptions(horizon_T=horizon_T)
    cache = SimulationCache(16)
    rows = []
    for C in range(1, 11):
        for lam in np.linspace(0.01, 1.0, 10):
            beta = KLFn.parse(f"{C}*s*exp(-{float(lam)!r}*t)")
            rep = falsify(sys, EstimateSpec("zero_UGAS", {"beta": beta}), cfg, opts, cache=cache)
            rows.append({"C": C, "lambda": float(lam), "violated": rep.violation_found,
                         "max_residual": _f(rep.max_residual),
                         "witness_x0": float(rep.witness.x0[0]) if rep.witness else None})
    return rows


def bad_example_reproduction(seed: int = 0, trials: int = 200) -> dict:
    sys = bad_example()
    x100 = simulate_x100(sys)
    practical = practical_suite(trials, seed, sys=sys)
    pw = pointwise_suite("w^2", sys=sys)
    pw_x2 = pointwise_suite("x^2", sys=sys)
    local, peak, r = local_suite(trials, seed, sys=sys)
    grid = zero_ugas_grid(seed, sys=sys)
    n_viol = sum(row["violated"] for row in grid)
    return {
        "seed": seed,
        "trials": trials,
        "x100": {"value": x100, "bounds": list(X100_BOUNDS),
                 "inside": X100_BOUNDS[0] <= x100 <= X100_BOUNDS[1]},
        "practical_iISS": {"status": "violated" if practical.violated else "pass",
                           "report": practical.to_dict(samples=False)},
        "pointwise_dissipation": {
            "V=w^2": {"status": "violated" if pw.violated else "pass",
                      "report": pw.to_dict(samples=False)},
            "V=x^2": {"status": "violated" if pw_x2.violated else "pass",
                      "report": pw_x2.to_dict(samples=False)},
        },
        "local_iISS": {"status": "violated" if local.violated else "pass",
                       "report": local.to_dict(samples=False),
                       "max_abs_x_in_gate": _f(peak), "r": _f(r),
                       "invariance_holds_on_sample": peak <= r + 1e-3,
                       "impulse_counterexample": impulse_counterexample(sys=sys)},
        "zero_UGAS": {"status": "violated" if n_viol == len(grid) else
                      "partially violated" if n_viol else "no violation found",
                      "n_candidates": len(grid), "n_violated": n_viol,
                      "min_residual": min(row["max_residual"] for row in grid),
                      "candidates": grid},
    }


def summary_lines(rep: dict) -> list:
    pw = rep["pointwise_dissipation"]
    loc = rep["local_iISS"]
    return [
        f"x(100) = {rep['x100']['value']:.8f} "
        f"({'inside' if rep['x100']['inside'] else 'OUTSIDE'} {rep['x100']['bounds']})",
        f"practical iISS (p=1): {rep['practical_iISS']['status']} "
        f"(max residual {rep['practical_iISS']['report']['max_residual']:.4g})",
        f"pointwise dissipation V=w^2: {pw['V=w^2']['status']} "
        f"(max residual {pw['V=w^2']['report']['max_residual']:.4g}); "
        f"V=x^2: {pw['V=x^2']['status']}",
        f"local iISS (l=0.5): {loc['status']} "
        f"(max residual {loc['report']['max_residual']:.4g}, max |x| {loc['max_abs_x_in_gate']:.4f}"
        f" vs r {loc['r']:.4f}; impulse input reaches "
        f"{loc['impulse_counterexample']['max_abs_x']:.4f})",
        f"0-UGAS: {rep['zero_UGAS']['status']} ({rep['zero_UGAS']['n_violated']}/"
        f"{rep['zero_UGAS']['n_candidates']} candidates, min residual "
        f"{rep['zero_UGAS']['min_residual']:.4g})",
    ]


def jump_demo(horizon_J: int = 3, horizon_T: float = 10.0, priority: str = "jump_first"):
    """Simulate the decay/jump demo from ``x0 = 1`` (on the jump set)."""
    sys = decay_jump_demo()
    opts = SimOptions(horizon_T=horizon_T, horizon_J=horizon_J, priority=priority)
    return sys, simulate(sys, [1.0], None, opts)
