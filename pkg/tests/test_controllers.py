import pytest
from hypothesis import given, strategies as st

from vslcav.controllers import (
    NO_LEAD,
    Active,
    ControllerParams,
    RadarReading,
    arbitrate,
    control,
    safe_margin,
    u_nominal,
    u_safe,
)

P = ControllerParams()
finite = st.floats(-50, 50, allow_nan=False)


def test_nominal_examples():
    assert u_nominal(10.0, 10.0) == 0.0
    assert u_nominal(15.0, 13.41) == pytest.approx(-1.272, abs=1e-9)
    assert u_nominal(13.41, 18.0) == pytest.approx(3.672, abs=1e-9)


def test_safe_examples():
    assert u_safe(RadarReading(2.0 * 15 + 15.0, 15.0), 15.0) == pytest.approx(0.0, abs=1e-12)
    assert u_safe(RadarReading(50.0, 12.0), 15.0) == pytest.approx(-1.25, abs=1e-9)
    assert u_safe(RadarReading(100.0, 10.0), 10.0) == pytest.approx(3.25, abs=1e-9)
    assert u_safe(NO_LEAD, 10.0) is None


def test_arbitrate_examples():
    c = arbitrate(-1.272, -1.25)
    assert c.u_cmd == pytest.approx(-1.272, abs=1e-9) and c.active is Active.NOMINAL
    c = arbitrate(0.5, None)
    assert c.u_cmd == 0.5 and c.active is Active.NOMINAL and c.u_safe is None
    c = arbitrate(3.672, -1.25)
    assert c.u_cmd == pytest.approx(-1.25, abs=1e-9) and c.active is Active.SAFETY_FILTER
    assert arbitrate(3.672, None).u_cmd == P.u_max
    assert arbitrate(-9.0, None).u_cmd == P.u_min


def test_tie_goes_to_nominal():
    assert arbitrate(0.7, 0.7).active is Active.NOMINAL


def test_params_validation():
    for bad in ({"k_p": 0}, {"t_min": -1}, {"s_min": 0}, {"u_min": 0.5}, {"u_max": -1}):
        with pytest.raises(ValueError):
            ControllerParams(**bad)
    with pytest.raises(ValueError):
        RadarReading(0.0, 10.0)


@given(finite, finite)
def test_homogeneity(v, err):
    assert u_nominal(v, v + 2 * err) == pytest.approx(2 * u_nominal(v, v + err), rel=1e-12, abs=1e-12)


@given(st.floats(0, 40), st.floats(0, 40), st.floats(0.1, 150), st.floats(0, 40))
def test_min_selection_property(v, v_des, s, v_l):
    c = control(v, v_des, RadarReading(s, v_l), P)
    raw = min(c.u_nom, c.u_safe)
    assert c.u_cmd == min(max(raw, P.u_min), P.u_max)
    assert (c.active is Active.SAFETY_FILTER) == (c.u_safe < c.u_nom)
    assert safe_margin(s, v) == pytest.approx(s - (2.0 * v + 15.0))
