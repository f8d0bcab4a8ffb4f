import numpy as np
import pytest

from hybrid_iiss.system import (ProperIndicator, SystemSpecError, eval_flow, eval_jump, in_C,
                                in_D, make_system, omega)


def test_bad_example_values(bad):
    assert eval_flow(bad, [0.0], [0.0])[0] == 0.0
    assert eval_flow(bad, [1.0], [0.0])[0] == 0.0
    assert eval_flow(bad, [2.0], [0.0])[0] == -2.0
    assert eval_flow(bad, [2.0], [0.5])[0] == -1.5
    assert not in_D(bad, [3.0], [0.0]) and in_C(bad, [3.0], [0.0])


def test_jump_demo_values(jumper):
    assert eval_jump(jumper, [1.0])[0] == 0.5
    assert in_D(jumper, [1.0])
    assert in_C(jumper, [0.5]) and not in_D(jumper, [0.5])


def test_two_dimensional_autonomous():
    sys = make_system({"n": 2, "m": 0, "flow": ["x2", "-x1"], "jump": ["x1", "x2"]})
    np.testing.assert_array_equal(eval_flow(sys, [1.0, 2.0]), [2.0, -1.0])


def test_dimension_mismatch():
    with pytest.raises(SystemSpecError) as info:
        make_system({"n": 1, "flow": ["-x", "x"]})
    assert info.value.field == "flow"


def test_unknown_variable_and_key():
    with pytest.raises(SystemSpecError) as info:
        make_system({"n": 1, "m": 0, "flow": ["-x + u1"]})
    assert info.value.field == "flow[0]"
    with pytest.raises(SystemSpecError):
        make_system({"n": 1, "flow": ["-x"], "flwo": 1})


def test_parse_error_carries_position():
    with pytest.raises(SystemSpecError) as info:
        make_system({"n": 1, "flow": ["-x +* 2"]})
    assert info.value.position == 4


def test_discontinuous_guard_rejected():
    with pytest.raises(SystemSpecError) as info:
        make_system({"n": 1, "flow": ["-x"], "flow_guard": "piecewise(x <= 0, -1, 1)"})
    assert info.value.field == "flow_guard"


def test_omega():
    I = ProperIndicator.interval(-1.0, 1.0)
    assert omega(I, [2.0]) == 1.0
    assert omega(I, [0.5]) == 0.0
    assert omega(ProperIndicator.point([0.0]), [-3.0]) == 3.0
    B = ProperIndicator.box([0.0, 0.0], [1.0, 1.0])
    assert omega(B, [4.0, 5.0]) == pytest.approx(5.0)
    np.testing.assert_allclose(I(np.array([[2.0], [-3.0], [0.0]])), [1.0, 2.0, 0.0])


def test_indicator_rejects_bad_box():
    with pytest.raises(ValueError):
        ProperIndicator.box([1.0], [0.0])


def test_vectorized_maps_agree_with_compiled(bad):
    maps = bad.compiled()
    X = np.linspace(-3, 3, 13)[:, None]
    U = np.linspace(-1, 1, 13)[:, None]
    vec = bad.flow_values(X, U)[:, 0]
    out = np.zeros(1)
    for k in range(13):
        maps.f(X[k], U[k], out)
        assert out[0] == pytest.approx(vec[k], rel=1e-14, abs=1e-14)


def test_describe_round_trip(bad):
    desc = bad.describe()
    again = make_system({**{k: v for k, v in desc.items() if k not in ("flow", "jump")},
                         "flow": desc["flow"], "jump": desc["jump"]})
    assert again.describe() == desc
