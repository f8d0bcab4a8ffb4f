import math

import numpy as np
import pytest

from hybrid_iiss.hybrid_time import InputSchedule, jump_times
from hybrid_iiss.simulator import (InitializationError, NonFiniteStateError, SimOptions,
                                   Termination, locate_event, simulate)
from hybrid_iiss.system import make_system


@pytest.fixture(scope="module")
def decay():
    return make_system({"n": 1, "m": 0, "flow": ["-x"]})


def _domain_ok(sol):
    d = sol.domain
    assert d.phases[0][0] == 0.0
    for (a, b), (c, _) in zip(d.phases, d.phases[1:]):
        assert a <= b == c
    for k, (a, b) in enumerate(d.phases):
        ts = sol.arc.times[k]
        assert ts[0] == a and ts[-1] == b and np.all(np.diff(ts) >= 0)


def test_linear_decay(decay):
    sol = simulate(decay, [1.0], None, SimOptions(horizon_T=1.0))
    assert sol.arc.terminal_state[0] == pytest.approx(math.exp(-1), abs=1e-6)
    assert sol.termination == Termination.HORIZON
    _domain_ok(sol)


def test_bad_example_x100(bad):
    sol = simulate(bad, [2.0], None, SimOptions(horizon_T=100.0))
    assert 1.00497 <= sol.arc.terminal_state[0] <= 1.00991


def test_jump_demo_event_times(jumper):
    sol = simulate(jumper, [1.0], None, SimOptions(horizon_J=3))
    assert [p.t for p in jump_times(sol)] == pytest.approx([0.0, math.log(2), 2 * math.log(2)],
                                                            abs=1e-5)
    assert sol.domain.n_phases == 4
    _domain_ok(sol)


def test_priority_flow_first(jumper):
    # on C and D at x = 1: flow priority still jumps since flowing would leave C
    sol = simulate(jumper, [0.9], None, SimOptions(horizon_J=2, priority="flow_first"))
    assert sol.domain.phases[0][1] == pytest.approx(math.log(1 / 0.9), abs=1e-6)
    _domain_ok(sol)


def test_jump_first_vs_flow_first_on_overlap():
    # C and D overlap on [0, 1]; jump priority jumps at once, flow priority flows first
    sys = make_system({"n": 1, "m": 0, "flow": ["1"], "jump": ["x + 10"],
                       "flow_guard": "x - 1", "jump_guard": "-1"})
    a = simulate(sys, [0.0], None, SimOptions(horizon_J=1, horizon_T=5, priority="jump_first"))
    b = simulate(sys, [0.0], None, SimOptions(horizon_J=1, horizon_T=5, priority="flow_first"))
    assert a.domain.phases[0] == (0.0, 0.0)
    assert b.domain.phases[0][1] == pytest.approx(1.0, abs=1e-9)


def test_left_C_and_D():
    sys = make_system({"n": 1, "m": 0, "flow": ["1"], "flow_guard": "x - 1"})
    sol = simulate(sys, [0.0], None, SimOptions(horizon_T=5))
    assert sol.termination == Termination.LEFT
    assert sol.domain.terminal.t == pytest.approx(1.0, abs=1e-9)


def test_zeno_cap():
    sys = make_system({"n": 1, "m": 0, "flow": ["0"], "jump": ["x"], "jump_guard": "0"})
    sol = simulate(sys, [0.0], None, SimOptions(horizon_J=1000, zeno_cap=10))
    assert sol.termination == Termination.ZENO
    assert sol.domain.n_phases == 11


def test_blowup():
    sys = make_system({"n": 1, "m": 0, "flow": ["x^2"]})
    sol = simulate(sys, [1.0], None, SimOptions(horizon_T=2.0, step=1e-3, blowup=1e6))
    assert sol.termination == Termination.BLOWUP
    # exact solution 1/(1 - t) escapes at t = 1
    assert sol.domain.terminal.t < 1.01


def test_initialization_error():
    sys = make_system({"n": 1, "m": 0, "flow": ["-x"], "flow_guard": "x - 1"})
    with pytest.raises(InitializationError):
        simulate(sys, [2.0])


def test_nonfinite_state():
    sys = make_system({"n": 1, "m": 0, "flow": ["-x"], "jump": ["ln(x - 1)"],
                       "flow_guard": "-1", "jump_guard": "x - 0.5"})
    with pytest.raises(NonFiniteStateError):
        simulate(sys, [0.0], None, SimOptions(horizon_J=2))


def test_locate_event():
    unit = make_system({"n": 1, "m": 0, "flow": ["1"], "flow_guard": "x - 1"})
    tau = locate_event(unit, [0.9], [], 0.2, "flow_exit", tol=1e-12)
    assert 0.9 + tau == pytest.approx(1.0, abs=1e-9)
    assert locate_event(unit, [0.0], [], 0.2, "flow_exit") is None
    grow = make_system({"n": 1, "m": 0, "flow": ["x"], "jump": ["x/2"],
                        "flow_guard": "-1", "jump_guard": "1 - x"})
    # start one step short of the event, as the simulator would
    t0 = 0.65
    tau = locate_event(grow, [0.5 * math.exp(t0)], [], 0.1, "jump_entry")
    assert t0 + tau == pytest.approx(math.log(2), abs=1e-6)


def test_rk4_order(decay):
    errs = []
    for h in (0.1, 0.05, 0.025, 0.0125):
        sol = simulate(decay, [1.0], None, SimOptions(step=h, horizon_T=1.0))
        errs.append(abs(sol.arc.terminal_state[0] - math.exp(-1)))
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert min(ratios) >= 8


def test_input_breaks_are_hit(bad):
    sched = InputSchedule([0.3337], [[1.0], [-1.0]])
    sol = simulate(bad, [0.0], sched, SimOptions(horizon_T=1.0, step=0.1))
    assert 0.3337 in sol.arc.times[0]


def test_determinism(bad):
    sched = InputSchedule([0.5, 1.5], [[1.0], [-2.0], [0.5]])
    a = simulate(bad, [0.3], sched, SimOptions(horizon_T=3.0))
    b = simulate(bad, [0.3], sched, SimOptions(horizon_T=3.0))
    np.testing.assert_array_equal(a.arc.samples()[2], b.arc.samples()[2])


def test_options_validation():
    with pytest.raises(ValueError):
        SimOptions(step=0)
    with pytest.raises(ValueError):
        SimOptions(priority="both")
