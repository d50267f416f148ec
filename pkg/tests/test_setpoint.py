import itertools
import math
import random

import pytest
from hypothesis import given, strategies as st

from vslcav.setpoint import MuxInputs, RampState, Source, mux, ramp

speeds = st.floats(0.0, 40.0, allow_nan=False)


def test_mux_examples():
    assert mux(MuxInputs(False, True, 31.3, 13.41, 14.2)) == (14.2, Source.MEASURED_VEL)
    assert mux(MuxInputs(True, True, 31.3, 13.41, 14.2)) == (13.41, Source.VSL)
    assert mux(MuxInputs(True, False, 31.3, 13.41, 14.2)) == (31.3, Source.USER)


def test_mux_truth_table_exhaustive():
    rng = random.Random(0)
    for engaged, valid in itertools.product([False, True], repeat=2):
        for _ in range(100):
            user, vsl, v = (rng.uniform(0, 40) for _ in range(3))
            selected, source = mux(MuxInputs(engaged, valid, user, vsl, v))
            expected = (v, Source.MEASURED_VEL) if not engaged else (vsl, Source.VSL) if valid else (user, Source.USER)
            assert (selected, source) == expected


def test_ramp_examples():
    state, out = ramp(RampState(13.41), 18.0, 0.05)
    assert out == pytest.approx(13.485, abs=1e-12)
    assert ramp(RampState(18.0), 18.0, 0.05)[1] == 18.0
    with pytest.raises(ValueError):
        ramp(RampState(1.0), 2.0, 0.0)
    with pytest.raises(ValueError):
        RampState(1.0, up_rate=0.0)


def test_ramp_step_duration():
    state = RampState(13.41)
    ticks = 0
    while state.current_output != 13.41 + 4.47:
        state, _ = ramp(state, 13.41 + 4.47, 0.05)
        ticks += 1
    assert ticks == math.ceil(4.47 / 1.5 / 0.05)
    assert ticks * 0.05 == pytest.approx(2.98, abs=0.05)


@given(speeds, st.lists(speeds, min_size=1, max_size=50), st.sampled_from([0.01, 0.05, 0.1]))
def test_ramp_rate_bound(start, targets, dt):
    state = RampState(start)
    prev = start
    for target in targets:
        state, out = ramp(state, target, dt)
        assert -2.0 * dt - 1e-9 <= out - prev <= 1.5 * dt + 1e-9
        prev = out


@given(speeds, speeds, st.sampled_from([0.02, 0.05, 0.1]))
def test_ramp_reaches_target_without_overshoot(start, target, dt):
    state = RampState(start)
    rate = 1.5 if target > start else 2.0
    n = math.ceil(abs(target - start) / rate / dt - 1e-9)
    outs = []
    for _ in range(n + 3):
        state, out = ramp(state, target, dt)
        outs.append(out)
    assert outs[max(n - 1, 0)] == target or (n == 0 and outs[0] == target)
    lo, hi = sorted((start, target))
    assert all(lo - 1e-12 <= o <= hi + 1e-12 for o in outs)


@given(speeds, speeds, st.sampled_from([0.05]))
def test_reengagement_bumpless(prev_output, v, dt):
    # while disengaged the mux feeds v through; one tick after re-engaging the
    # output has moved from v by at most one ramp step
    state = RampState(prev_output)
    for _ in range(2000):
        selected, _ = mux(MuxInputs(False, True, 30.0, 25.0, v))
        state, out = ramp(state, selected, dt)
    selected, _ = mux(MuxInputs(True, True, 30.0, 25.0, v))
    state, out = ramp(state, selected, dt)
    assert abs(out - v) <= max(1.5, 2.0) * dt + 1e-9
