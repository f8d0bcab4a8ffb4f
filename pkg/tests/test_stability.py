import json
import math

import numpy as np
import pytest

from hybrid_iiss.comparison import (ClassValidationError, DomainError, FnClass, KLFn, KLLFn,
                                    ScalarComparisonFn, majorize_to_kinf)
from hybrid_iiss.hybrid_time import DomainError as TimeDomainError
from hybrid_iiss.hybrid_time import HybridTimeDomain, InputSchedule
from hybrid_iiss.sampling import random_schedule
from hybrid_iiss.simulator import SimOptions, SolutionPair, simulate
from hybrid_iiss.stability import (ALPHA_TEXT, SIGMA_TEXT, EstimateSpec, GradientError,
                                   GridSpec, NonzeroInputError, OrderingError, ScalarField,
                                   SpecError, bad_example_local_cert, bad_example_practical_cert,
                                   check_0ugas, check_iiss, check_local_iiss,
                                   check_pointwise_dissipation, check_practical_iiss,
                                   check_traj_dissipation, check_ubebs, check_ubebs_alpha123,
                                   construct_0ugas_beta, derive_ubebs_from_a, empirical_V2,
                                   energy, energy_profile, merge_reports)
from hybrid_iiss.system import ProperIndicator, make_system

F = ScalarComparisonFn.parse
ORIGIN = ProperIndicator.point([0.0])
INTERVAL = ProperIndicator.interval(-1.0, 1.0)


def _random_runs(sys, n, horizon_T=5.0, lo=-2.0, hi=2.0, levels=(-1.0, 1.0), seed=0):
    out = []
    for i in range(n):
        rng = np.random.default_rng(seed + i)
        sched = random_schedule(rng, sys.m, levels[0], levels[1], (0, 4), horizon_T)
        out.append(simulate(sys, [rng.uniform(lo, hi)], sched, SimOptions(horizon_T=horizon_T)))
    return out


# --- energy -----------------------------------------------------------------

def test_energy_with_jump():
    d = HybridTimeDomain(((0, 1), (1, 2)))
    u = InputSchedule.constant([1.0]).realize(d)
    g = F("s^2", FnClass.KINF)
    assert energy(u, g, (2.0, 1)) == 3.0
    assert energy(u, g, (1.0, 0)) == 2.0  # jump (1, 0) counts at its own point
    assert energy(u, g, (0.5, 0)) == 0.5


def test_energy_zero_and_domain():
    d = HybridTimeDomain(((0, 1), (1, 2)))
    u = InputSchedule.zero(1).realize(d)
    assert np.all(energy_profile(u, F("s"), [0.0, 1.0, 2.0], [0, 1, 1]) == 0.0)
    with pytest.raises(TimeDomainError):
        energy(u, F("s"), (0.5, 1))


# --- iISS family ------------------------------------------------------------

def test_iiss_at_rest_in_A(linear):
    sol = simulate(linear, [0.0], None, SimOptions(horizon_T=2.0))
    rep = check_iiss([sol], KLFn.parse("s*exp(-t)"), F("s", FnClass.KINF), F("s", FnClass.K),
                     ORIGIN)
    assert rep.max_residual <= 0.0


def test_iiss_local_cert_from_half(bad):
    cert = bad_example_local_cert(0.5)
    sol = simulate(bad, [0.5], None, SimOptions(horizon_T=10.0))
    rep = check_iiss([sol], cert.beta, cert.chi, cert.gamma, ORIGIN)
    assert not rep.violated


def test_iiss_exponential_candidate_fails(bad):
    sol = simulate(bad, [2.0], None, SimOptions(horizon_T=500.0))
    rep = check_iiss([sol], KLFn.parse("10*s*exp(-t)"), F("s", FnClass.KINF),
                     F("s", FnClass.K), ORIGIN)
    assert rep.violated and rep.max_residual >= 0.5
    assert rep.witness["t"] > 1.0


def test_iiss_validates_classes(linear):
    sol = simulate(linear, [1.0], None, SimOptions(horizon_T=1.0))
    with pytest.raises(ClassValidationError):
        check_iiss([sol], KLFn.parse("s*exp(t)"), F("s"), F("s"), ORIGIN)
    with pytest.raises(ClassValidationError):
        check_iiss([sol], KLFn.parse("s*exp(-t)"), F("s/(1+s)"), F("s"), ORIGIN)


def test_0ugas_linear(linear):
    sols = [simulate(linear, [x0], None, SimOptions(horizon_T=5.0)) for x0 in (-2.0, 0.5, 3.0)]
    rep = check_0ugas(sols, KLFn.parse("s*exp(-t)"), ORIGIN)
    assert rep.max_residual <= 1e-6
    assert rep.extra["n_trajectories"] == 3


def test_0ugas_rejects_inputs_and_accepts_empty(linear):
    sol = simulate(linear, [1.0], InputSchedule.constant([1.0]), SimOptions(horizon_T=1.0))
    with pytest.raises(NonzeroInputError):
        check_0ugas([sol], KLFn.parse("s*exp(-t)"), ORIGIN)
    rep = check_0ugas([], KLFn.parse("s*exp(-t)"), ORIGIN)
    assert rep.n_samples == 0 and not rep.violated


def test_ubebs_at_rest(linear):
    sol = simulate(linear, [0.0], None, SimOptions(horizon_T=1.0))
    rep = check_ubebs([sol], F("s^2", FnClass.KINF), F("s", FnClass.KINF), F("s", FnClass.K),
                      0.0, ORIGIN)
    assert rep.max_residual <= 0.0 and rep.kind == "UBEBS_c0"


def test_ubebs_synthetic_escape():
    d_times = [np.linspace(0.0, 1.0, 11)]
    states = [np.linspace(0.0, 10.0, 11)]
    d = HybridTimeDomain(((0.0, 1.0),))
    inp = InputSchedule.constant([1.0]).realize(d)
    sol = SolutionPair.from_samples(d_times, states, inp)
    rep = check_ubebs([sol], F("s^2", FnClass.KINF), F("s", FnClass.KINF), F("s", FnClass.K),
                      0.0, ORIGIN)
    assert rep.max_residual == pytest.approx(99.0, abs=1e-12)
    rep3 = check_ubebs_alpha123([sol], F("s^2", FnClass.KINF), F("s", FnClass.KINF),
                                F("s", FnClass.KINF), F("s", FnClass.K), ORIGIN)
    assert rep3.max_residual == pytest.approx(99.0, abs=1e-12)


def test_ubebs_bad_example_interval(bad):
    """x^2 decreases up to sigma-energy; with w <= |x| <= w + 1 this gives
    w^2 <= 2 w0^2 + 2 + ||u||^sigma."""
    sols = _random_runs(bad, 20, lo=-5.0, hi=5.0)
    rep = check_ubebs(sols, F("s^2", FnClass.KINF), F("2*s^2", FnClass.KINF),
                      F(SIGMA_TEXT, FnClass.KINF), 2.0, INTERVAL, 1e-6)
    assert not rep.violated


def test_alpha123_identity_matches_ubebs_c0(bad):
    sols = _random_runs(bad, 100, horizon_T=2.0)
    a, k, g = F("s^2", FnClass.KINF), F("2*s^2 + s", FnClass.KINF), F("s", FnClass.K)
    r1 = check_ubebs(sols, a, k, g, 0.0, ORIGIN)
    r2 = check_ubebs_alpha123(sols, a, k, F("s", FnClass.KINF), g, ORIGIN)
    np.testing.assert_array_equal(r1.residual, r2.residual)


def test_alpha123_contractive(linear):
    sols = [simulate(linear, [x0], None, SimOptions(horizon_T=3.0)) for x0 in (-1.0, 2.0)]
    rep = check_ubebs_alpha123(sols, F("s", FnClass.KINF), F("s", FnClass.KINF),
                               F("s", FnClass.KINF), F("s", FnClass.K), ORIGIN)
    assert not rep.violated


def test_derive_ubebs_from_a():
    alpha, _ = derive_ubebs_from_a(F("s^2"), F("s"), F("s"))
    assert alpha(2.0) == pytest.approx(2.0, abs=1e-9)
    _, kappa = derive_ubebs_from_a(F("s"), F("2*s"), F("s"))
    assert kappa(3.0) == pytest.approx(6.0, abs=1e-9)
    alpha, kappa = derive_ubebs_from_a(F("s"), F("s"), F("s"))
    r = np.linspace(0, 5, 11)
    np.testing.assert_allclose(alpha(r), r / 2, atol=1e-9)
    np.testing.assert_allclose(kappa(r), r, atol=1e-9)


def test_local_gate_counts(bad):
    cert = bad_example_local_cert(0.5)
    outside = simulate(bad, [0.6], None, SimOptions(horizon_T=2.0))
    # gamma(s) = (4/3) s, so a level of 0.45 for one time unit has energy 0.6
    loud = simulate(bad, [0.1], InputSchedule([1.0], [[0.45], [0.0]]), SimOptions(horizon_T=2))
    inside = simulate(bad, [0.1], None, SimOptions(horizon_T=2.0))
    rep = check_local_iiss([outside, loud, inside], cert.beta, cert.chi, cert.gamma, 0.5, ORIGIN)
    assert rep.extra["in_gate"] == 1 and rep.extra["out_of_gate_indices"] == [0, 1]
    assert set(rep.traj.tolist()) == {2}


def test_practical_large_p_and_p_zero(bad):
    sols = _random_runs(bad, 5)
    beta, chi, gamma = KLFn.parse("s*exp(-t)"), F("s", FnClass.KINF), F("s", FnClass.K)
    rep = check_practical_iiss(sols, beta, chi, gamma, 10.0, ORIGIN)
    assert not rep.violated
    r0 = check_practical_iiss(sols, beta, chi, gamma, 0.0, ORIGIN)
    r1 = check_iiss(sols, beta, chi, gamma, ORIGIN)
    np.testing.assert_array_equal(r0.residual, r1.residual)


# --- dissipation ------------------------------------------------------------

def test_traj_dissipation_contractive(linear):
    sols = [simulate(linear, [x0], None, SimOptions(horizon_T=4.0)) for x0 in (-3.0, 1.0)]
    V = ScalarField.parse("w^2", 1, ORIGIN)
    rep = check_traj_dissipation(sols, V, F("0.5*s^2", FnClass.KINF), F("2*s^2", FnClass.KINF),
                                 F("0.01*s^2", FnClass.PD), F("s", FnClass.K), ORIGIN)
    assert not rep.violated
    assert rep.stream_max("accumulation") <= 0.0


def test_traj_dissipation_accumulation_at_start_is_zero(linear):
    sol = simulate(linear, [1.0], None, SimOptions(horizon_T=1.0))
    V = ScalarField.parse("x^2", 1)
    rep = check_traj_dissipation([sol], V, F("0.5*s^2", FnClass.KINF), F("2*s^2", FnClass.KINF),
                                 F("s^2", FnClass.PD), F("s", FnClass.K), ORIGIN)
    first = np.nonzero(rep.stream == "accumulation")[0][0]
    assert rep.residual[first] == 0.0


def test_traj_dissipation_increasing_V():
    sol = SolutionPair.from_samples([np.linspace(0, 1, 5)], [np.linspace(1, 2, 5)])
    V = ScalarField.parse("x^2", 1)
    rep = check_traj_dissipation([sol], V, F("0.5*s^2", FnClass.KINF), F("2*s^2", FnClass.KINF),
                                 F("s^2", FnClass.PD), F("s", FnClass.K), ORIGIN)
    assert rep.violated and rep.stream_max("accumulation") > 0


def test_pointwise_linear_exact(linear):
    rep = check_pointwise_dissipation(linear, ScalarField.parse("x^2", 1), F("2*s^2", FnClass.PD),
                                      majorize_to_kinf(F("0")), ORIGIN,
                                      GridSpec(((-3, 3, 13),), ((0, 0, 1),)),
                                      grad=lambda X: 2 * X)
    assert rep.max_residual == 0.0


def test_pointwise_jump_residual(jumper):
    rep = check_pointwise_dissipation(jumper, ScalarField.parse("x^2", 1), F("0.5*s^2", FnClass.PD),
                                      F("0"), ORIGIN, GridSpec(((1, 1, 1),)))
    assert rep.stream_max("jump") == pytest.approx(-0.25, abs=1e-15)


def test_pointwise_bad_example_x_squared(bad):
    rep = check_pointwise_dissipation(bad, ScalarField.parse("x^2", 1), F(ALPHA_TEXT, FnClass.KINF),
                                      F(SIGMA_TEXT, FnClass.KINF), INTERVAL,
                                      GridSpec(((-5, 5, 101),), ((-5, 5, 101),)))
    assert rep.max_residual <= 1e-6


def test_pointwise_gradient_failure(linear):
    with pytest.raises(GradientError):
        check_pointwise_dissipation(linear, ScalarField.parse("ln(x)", 1), F("s^2", FnClass.PD),
                                    F("s"), ORIGIN, GridSpec(((0, 1, 3),), ((0, 0, 1),)))


# --- constructions ----------------------------------------------------------

def test_empirical_V2_floor(bad):
    alpha = F("s", FnClass.KINF)
    est = empirical_V2(bad, alpha, F("s", FnClass.K), [1.5], budget=5)
    assert est.value >= 1.5
    assert len(est.candidates) == 6


def test_empirical_V2_contractive_zero_input():
    sys = make_system({"n": 1, "m": 0, "flow": ["-x"]})
    est = empirical_V2(sys, F("s^2", FnClass.KINF), F("s", FnClass.K), [2.0], budget=1)
    assert est.value == 4.0 and est.witness["trial"] == -1


def test_construct_0ugas_beta():
    bt1, bt2 = KLFn.parse("s*exp(-t)"), KLFn.parse("sqrt(2)*exp(-0.04*t)*s")
    beta = construct_0ugas_beta(bt1, 0.5, bt2, 1.0)
    assert beta.t_star(2.0) == pytest.approx(math.log(4), abs=1e-8)
    s = 0.4  # bt1(s, 0) <= l - p, so T*(s) = 0
    assert beta.t_star(s) == 0.0
    t = np.array([0.5, 1.0, 3.0])
    np.testing.assert_allclose(beta(s, t), bt2(1.0, np.maximum(t - 1, 0)) + 1 / t, rtol=1e-14)
    with pytest.raises(OrderingError):
        construct_0ugas_beta(bt1, 1.0, bt2, 0.5)


# --- certificates -----------------------------------------------------------

def test_practical_cert_values():
    cert = bad_example_practical_cert()
    assert cert.p == 1.0
    assert cert.beta(0.5, 10.0) == pytest.approx(0.05)
    assert math.isfinite(cert.beta(3.0, 1e-3))


def test_local_cert_values():
    cert = bad_example_local_cert(0.5)
    assert cert.gamma(1.0) == pytest.approx(4 / 3, abs=1e-15)
    assert cert.r == pytest.approx(0.790569, abs=1e-6)
    assert cert.chi(1.0) == pytest.approx(1.732051, abs=1e-6)
    assert cert.beta(2.0, 0.0) == pytest.approx(2 * math.sqrt(2), abs=1e-15)
    for bad_l in (0.0, 1.0, 1.5):
        with pytest.raises(DomainError):
            bad_example_local_cert(bad_l)


# --- specs and reports ------------------------------------------------------

def test_estimate_spec_validation():
    with pytest.raises(SpecError):
        EstimateSpec("ISS", {})
    with pytest.raises(SpecError):
        EstimateSpec("iISS", {"beta": KLFn.parse("s*exp(-t)")})
    with pytest.raises(SpecError):
        EstimateSpec.from_strings("iISS", {"beta": "s*exp(t)", "chi": "s", "gamma": "s"})
    with pytest.raises(SpecError) as info:
        EstimateSpec.from_strings("iISS", {"beta": "s*exp(-t)", "chi": "s/(1+s)", "gamma": "s"})
    assert info.value.field == "chi"


def test_estimate_spec_from_strings_dispatch(linear):
    spec = EstimateSpec.from_strings("zero_UGAS", {"beta": "s*exp(-t)/(1+j)"})
    assert isinstance(spec.params["beta"], KLLFn)
    sol = simulate(linear, [1.0], None, SimOptions(horizon_T=2.0))
    assert not spec.check([sol], ORIGIN).violated
    spec = EstimateSpec.from_strings("pointwise_dissipation", {
        "V": "x^2", "rho": "2*s^2", "lambda": "0", "grid": {"x": [[-1, 1, 5]], "u": [[0, 0, 1]]}})
    assert not spec.trajectory_based
    assert spec.check([], ORIGIN, system=linear).max_residual <= 1e-6


def test_report_json_and_merge(linear):
    sol = simulate(linear, [1.0], None, SimOptions(horizon_T=1.0))
    rep = check_0ugas([sol], KLFn.parse("s*exp(-t)"), ORIGIN)
    a, b = rep.to_json(), rep.to_json()
    assert a == b and json.loads(a)["n_samples"] == rep.n_samples
    merged = merge_reports([rep, rep])
    assert merged.n_samples == 2 * rep.n_samples
    assert set(merged.traj.tolist()) == {0, 1}
    assert "no violation" in rep.summary()
