import json
import math

import numpy as np
import pytest

from hybrid_iiss.comparison import FnClass, KLFn, ScalarComparisonFn
from hybrid_iiss.falsifier import (SamplerConfig, SimulationCache, falsify, refine, replay)
from hybrid_iiss.simulator import SimOptions
from hybrid_iiss.stability import EstimateSpec, SpecError, bad_example_practical_cert

ZERO_IN = dict(level_lo=(0.0,), level_hi=(0.0,), switches=(0, 0))


def _iiss(beta="s*exp(-t)"):
    return EstimateSpec("iISS", {"beta": KLFn.parse(beta),
                                 "chi": ScalarComparisonFn.identity(),
                                 "gamma": ScalarComparisonFn.parse("s", FnClass.K)})


def _zero(beta):
    return EstimateSpec("zero_UGAS", {"beta": KLFn.parse(beta)})


def test_true_estimate_is_not_falsified(linear):
    # |x(t)| <= |x0| e^-t + int |u| for x' = -x + u
    cfg = SamplerConfig((-5.0,), (5.0,), (-2.0,), (2.0,), (0, 4), trials=20, seed=3,
                        refine_rounds=2)
    rep = falsify(linear, _iiss(), cfg, SimOptions(horizon_T=8.0))
    assert not rep.violation_found
    assert rep.max_residual <= 1e-6
    assert rep.n_trials == 20 and not rep.errors
    assert sum(rep.histogram["counts"]) == 20


def test_false_estimate_is_falsified(linear):
    cfg = SamplerConfig((-5.0,), (5.0,), **ZERO_IN, trials=5, refine_rounds=0)
    rep = falsify(linear, _zero("s*exp(-2*t)"), cfg, SimOptions(horizon_T=5.0))
    assert rep.violation_found
    assert rep.witness is not None and rep.witness.seed == rep.witness.trial


def test_zero_rounds_keep_random_phase_result(bad):
    cfg = SamplerConfig((1.5,), (3.0,), **ZERO_IN, trials=4, refine_rounds=0)
    rep = falsify(bad, _zero("s*exp(-0.1*t)"), cfg, SimOptions(horizon_T=50.0))
    assert rep.refine_history == [rep.initial_residual]
    assert rep.max_residual == rep.initial_residual


def test_refinement_never_lowers_residual(bad):
    cfg = SamplerConfig((1.5,), (3.0,), **ZERO_IN, trials=3, refine_rounds=3)
    rep = falsify(bad, _zero("2*s*exp(-0.2*t)"), cfg, SimOptions(horizon_T=50.0))
    h = rep.refine_history
    assert len(h) == 4
    assert all(b >= a for a, b in zip(h, h[1:]))
    assert rep.max_residual >= rep.initial_residual


def test_refine_function_agrees(bad):
    cfg = SamplerConfig((1.5,), (3.0,), **ZERO_IN, trials=3, refine_rounds=0)
    opts = SimOptions(horizon_T=50.0)
    spec = _zero("2*s*exp(-0.2*t)")
    rep = falsify(bad, spec, cfg, opts)
    out = refine(bad, spec, rep.witness, 2, 0.5, opts, cfg)
    assert out.max_residual >= rep.max_residual


def test_workers_do_not_change_result(linear):
    base = dict(x0_lo=(-5.0,), x0_hi=(5.0,), level_lo=(-2.0,), level_hi=(2.0,),
                switches=(0, 4), trials=12, seed=7, refine_rounds=1)
    spec = _iiss("s*exp(-1.5*t)")
    opts = SimOptions(horizon_T=5.0)
    a = falsify(linear, spec, SamplerConfig(**base, workers=1), opts).to_dict()
    b = falsify(linear, spec, SamplerConfig(**base, workers=4), opts).to_dict()
    assert a == b


def test_replay_reproduces_witness(bad):
    cfg = SamplerConfig((1.5,), (3.0,), (-0.5,), (0.5,), (0, 3), trials=4, refine_rounds=1)
    opts = SimOptions(horizon_T=30.0)
    spec = _iiss("s*exp(-0.3*t)")
    rep = falsify(bad, spec, cfg, opts)
    again = replay(bad, spec, rep.witness, opts)
    assert abs(again.max_residual - rep.max_residual) <= 1e-12


def test_practical_certificate_survives(bad):
    cert = bad_example_practical_cert()
    spec = EstimateSpec("practical_iISS", {"beta": cert.beta, "chi": cert.chi,
                                           "gamma": cert.gamma, "p": cert.p})
    cfg = SamplerConfig((-5.0,), (5.0,), (-1.0,), (1.0,), (0, 5), trials=30, seed=1,
                        refine_rounds=1, check_tol=1e-4)
    rep = falsify(bad, spec, cfg, SimOptions(horizon_T=20.0))
    assert not rep.violation_found


def test_cache_reuses_simulations(linear):
    cache = SimulationCache(4)
    opts = SimOptions(horizon_T=2.0)
    cfg = SamplerConfig((-1.0,), (1.0,), **ZERO_IN, trials=3, refine_rounds=0)
    falsify(linear, _zero("s*exp(-0.5*t)"), cfg, opts, cache=cache)
    first = dict(cache.data)
    falsify(linear, _zero("2*s*exp(-0.5*t)"), cfg, opts, cache=cache)
    assert len(cache.data) == 3
    assert all(cache.data[k] is v for k, v in first.items())


def test_cache_is_bounded(linear):
    cache = SimulationCache(2)
    cfg = SamplerConfig((-1.0,), (1.0,), **ZERO_IN, trials=5, refine_rounds=0)
    falsify(linear, _zero("s*exp(-0.5*t)"), cfg, SimOptions(horizon_T=1.0), cache=cache)
    assert len(cache.data) == 2


def test_grid_estimates_are_rejected(bad):
    from hybrid_iiss.stability import GridSpec, ScalarField
    spec = EstimateSpec("pointwise_dissipation", {
        "V": ScalarField.parse("x^2", 1, bad.indicator),
        "rho": ScalarComparisonFn.parse("s^2", FnClass.PD),
        "lambda": ScalarComparisonFn.parse("s^2", FnClass.UNCLASSIFIED),
        "grid": GridSpec(((-1.0, 1.0, 3),), ((-1.0, 1.0, 3),))})
    with pytest.raises(SpecError):
        falsify(bad, spec, SamplerConfig((0.0,), (1.0,)))


def test_zero_input_estimate_rejects_nonzero_inputs(linear):
    from hybrid_iiss.stability.checks import NonzeroInputError
    cfg = SamplerConfig((-1.0,), (1.0,), (0.5,), (1.0,), (1, 1), trials=2, refine_rounds=0)
    with pytest.raises(NonzeroInputError):
        falsify(linear, _zero("s*exp(-t)"), cfg, SimOptions(horizon_T=1.0))


@pytest.mark.parametrize("kw", [dict(x0_lo=(1.0,), x0_hi=(0.0,)), dict(trials=0),
                                dict(switches=(3, 1)), dict(refine_shrink=1.0),
                                dict(workers=0)])
def test_sampler_validation(kw):
    base = dict(x0_lo=(0.0,), x0_hi=(1.0,))
    base.update(kw)
    with pytest.raises(ValueError):
        SamplerConfig(**base)


def test_box_dimension_mismatch(linear):
    with pytest.raises(ValueError):
        falsify(linear, _zero("s*exp(-t)"), SamplerConfig((0.0, 0.0), (1.0, 1.0)))


def test_report_json_has_no_nan(linear):
    cfg = SamplerConfig((-1.0,), (1.0,), **ZERO_IN, trials=2, refine_rounds=0)
    d = falsify(linear, _zero("s*exp(-0.5*t)"), cfg, SimOptions(horizon_T=1.0)).to_dict()
    json.dumps(d, allow_nan=False)
    assert math.isfinite(d["max_residual"])
    assert np.isfinite(d["initial_residual"])
