"""Places where a claimed estimate or argument does not hold numerically.

Each test pins down the counterexample and, where one exists, a corrected
version that does hold.
"""
import numpy as np
import pytest

from hybrid_iiss.comparison import FnClass, KLFn, ScalarComparisonFn
from hybrid_iiss.demos import impulse_counterexample, pointwise_suite
from hybrid_iiss.falsifier import SamplerConfig, falsify
from hybrid_iiss.sampling import random_schedule
from hybrid_iiss.simulator import SimOptions, simulate
from hybrid_iiss.stability import (ALPHA_TEXT, SIGMA_TEXT, EstimateSpec, ScalarField,
                                   check_traj_dissipation)
from hybrid_iiss.system import ProperIndicator

F = ScalarComparisonFn.parse
INTERVAL = ProperIndicator.interval(-1.0, 1.0)


def test_omega_squared_flow_inequality_fails():
    """With w = |x| - 1 outside [-1, 1], d(w^2)/dt = 2 w sgn(x) f.  At x = 5,
    u = 3: 2*4*(-5*16 + 3) = -616, while -alpha(4) + sigma(3) = -769."""
    rep = pointwise_suite("w^2")
    assert rep.violated
    assert rep.max_residual == pytest.approx(153.0, rel=1e-6)
    assert rep.extra["witness_point"] == {"x": [5.0], "u": [3.0]}


def test_x_squared_flow_inequality_holds():
    """d(x^2)/dt = -2x^2 (x - 1)^2 + 2xu <= -alpha(w) + sigma(|u|) everywhere."""
    assert pointwise_suite("x^2").max_residual <= 1e-6


def test_impulse_leaves_invariance_radius_but_estimate_holds():
    res = impulse_counterexample(0.5)
    assert res["in_gate"] == 1
    assert res["energy"] == pytest.approx(0.5, abs=1e-12)
    assert res["max_abs_x"] > res["r"] + 1e-3
    assert res["estimate_max_residual"] < 0


def _traj_runs(bad, n=30):
    sols = []
    for i in range(n):
        rng = np.random.default_rng(i)
        sched = random_schedule(rng, 1, -2.0, 2.0, (0, 4), 5.0)
        x0 = rng.choice([-1.0, 1.0]) * rng.uniform(1.02, 4.0)
        sols.append(simulate(bad, [x0], sched, SimOptions(horizon_T=5.0)))
    return sols


def test_traj_dissipation_suggested_pairing_fails(bad):
    """rho = min(alpha, s) demands a decrease of order w^2 near the interval,
    but the flow only gives -2 (1 + w) w^3.  Zero input from x0 = 1.1 suffices."""
    V = ScalarField.parse("w^2", 1, INTERVAL)
    sq = F("s^2", FnClass.KINF)
    rho = F(f"min({ALPHA_TEXT}, s)", FnClass.PD)
    sol = simulate(bad, [1.1], None, SimOptions(horizon_T=5.0))
    rep = check_traj_dissipation([sol], V, sq, sq, rho, F(SIGMA_TEXT, FnClass.K), INTERVAL)
    assert rep.violated and rep.stream_max("accumulation") > 1e-3
    assert rep.stream_max("sandwich") <= 0.0


def test_traj_dissipation_corrected_pairing_holds(bad):
    """Young's inequality 2 w |u| <= (2/3) w^3 + (4/3) |u|^(3/2) gives
    d(w^2)/dt <= -(4/3) w^3 - 2 w^4 + (4/3) |u|^(3/2)."""
    V = ScalarField.parse("w^2", 1, INTERVAL)
    sq = F("s^2", FnClass.KINF)
    rep = check_traj_dissipation(_traj_runs(bad), V, sq, sq, F("s^3 + 2*s^4", FnClass.PD),
                                 F("(4/3)*s^1.5", FnClass.K), INTERVAL)
    assert not rep.violated


def test_refinement_moves_toward_low_edge(bad):
    """For C s exp(-lam t) the residual at the horizon is about
    x(500) - C x0 exp(-500 lam), which shrinks as x0 grows; refinement
    therefore heads for the lower box edge 1.5, not 3."""
    spec = EstimateSpec("zero_UGAS", {"beta": KLFn.parse("s*exp(-0.01*t)")})
    cfg = SamplerConfig((1.5,), (3.0,), (0.0,), (0.0,), (0, 0), trials=3, seed=0,
                        refine_rounds=4)
    rep = falsify(bad, spec, cfg, SimOptions(horizon_T=500.0))
    assert rep.witness.x0[0] == pytest.approx(1.5)
    assert rep.refine_history[-1] > rep.initial_residual
