import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avgpred.errors import DomainError
from avgpred.switching import SwitchingSignal, constant, generate_random, periodic


def sig(times, modes, tau=0.3, horizon=10.0, **kw):
    return SwitchingSignal(tuple(times), tuple(modes), tau, horizon, **kw)


class TestModeAt:
    def test_no_switches(self):
        assert constant(0, 10.0).mode_at(5.0) == 0

    def test_right_continuous(self):
        s = sig([1.0], [0, 1])
        assert s.mode_at(1.0) == 1
        assert s.mode_at(0.999999) == 0

    def test_outside_domain(self):
        s = sig([1.0], [0, 1], horizon=2.0)
        with pytest.raises(DomainError):
            s.mode_at(-0.1)
        with pytest.raises(DomainError):
            s.mode_at(2.5)


class TestSwitchesIn:
    def test_empty(self):
        assert constant(1, 5.0).switches_in(0.0, 5.0) == []

    def test_count_and_bound(self):
        s = sig([0.3, 0.6, 0.9], [0, 1, 0, 1])
        ev = s.switches_in(0.0, 1.0)
        assert [e[0] for e in ev] == [0.3, 0.6, 0.9]
        assert len(ev) <= math.ceil(1.0 / 0.3)
        assert ev[0][1:] == (0, 1)

    def test_open_left_closed_right(self):
        s = sig([0.3, 0.6], [0, 1, 0])
        ev = s.switches_in(0.3, 0.6)
        assert ev == [(0.6, 1, 0)]

    def test_inverted(self):
        with pytest.raises(DomainError):
            sig([0.3], [0, 1]).switches_in(0.5, 0.4)


class TestValidation:
    def test_merges_repeated_modes(self):
        s = sig([1.0, 2.0], [0, 0, 1])
        assert s.switch_times == (2.0,)
        assert s.modes == (0, 1)

    def test_gap_too_short(self):
        with pytest.raises(ValueError):
            sig([1.0, 1.1], [0, 1, 0])

    def test_early_first_switch(self):
        with pytest.raises(ValueError):
            sig([0.1], [0, 1])
        assert sig([0.1], [0, 1], allow_early_first_switch=True).mode_at(0.1) == 1

    def test_mode_out_of_range(self):
        with pytest.raises(ValueError):
            SwitchingSignal((1.0,), (0, 2), 0.3, 5.0, num_modes=2)

    def test_switch_at_horizon(self):
        with pytest.raises(ValueError):
            sig([10.0], [0, 1])

    def test_roundtrip_dict(self):
        s = generate_random(3, 0.3, 8.0, seed=4)
        assert SwitchingSignal.from_dict(s.to_dict(), num_modes=3) == s


class TestGenerators:
    def test_single_mode(self):
        assert generate_random(1, 0.3, 10.0, seed=1).switch_times == ()

    def test_deterministic(self):
        assert generate_random(2, 0.3, 15.0, seed=7) == generate_random(2, 0.3, 15.0, seed=7)
        assert generate_random(2, 0.3, 15.0, seed=7) != generate_random(2, 0.3, 15.0, seed=8)

    def test_gaps(self):
        s = generate_random(2, 0.3, 15.0, seed=3)
        times = np.array((0.0,) + s.switch_times)
        assert np.all(np.diff(times) >= 0.3)
        assert all(a != b for a, b in zip(s.modes, s.modes[1:]))

    def test_periodic_period_equals_horizon(self):
        assert periodic(2, 2.0, 2.0).switch_times == ()

    def test_periodic_boundary(self):
        assert periodic(2, 0.5, 2.0).switch_times == (0.5, 1.0, 1.5)

    def test_periodic_round_robin(self):
        s = periodic(3, 1.0, 3.5)
        assert [s.mode_at(t) for t in (0.5, 1.5, 2.5, 3.2)] == [0, 1, 2, 0]

    def test_periodic_short_period(self):
        with pytest.raises(ValueError):
            periodic(2, 0.2, 2.0, dwell_time=0.3)


@st.composite
def signals(draw):
    tau = draw(st.floats(0.05, 1.0))
    horizon = draw(st.floats(1.0, 20.0))
    seed = draw(st.integers(0, 2**31))
    nm = draw(st.integers(1, 4))
    extra = draw(st.floats(0.0, 2.0))
    return generate_random(nm, tau, horizon, seed, extra)


@settings(max_examples=100, deadline=None)
@given(signals())
def test_min_gap_exact(s):
    times = (0.0,) + s.switch_times
    assert all(b - a >= s.dwell_time for a, b in zip(times, times[1:]))


@settings(max_examples=100, deadline=None)
@given(signals(), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_interval_additivity(s, fa, fb, fc):
    a, b, c = sorted(f * s.horizon for f in (fa, fb, fc))
    assert s.switches_in(a, b) + s.switches_in(b, c) == s.switches_in(a, c)


@settings(max_examples=100, deadline=None)
@given(signals(), st.floats(0, 1), st.floats(0.01, 3.0))
def test_count_bound(s, f, d):
    t = f * max(s.horizon - d, 0.0)
    if t + d <= s.horizon:
        assert len(s.switches_in(t, t + d)) <= math.ceil(d / s.dwell_time)


@settings(max_examples=50, deadline=None)
@given(signals())
def test_constant_between_switches(s):
    edges = (0.0,) + s.switch_times + (s.horizon,)
    for i, (lo, hi) in enumerate(zip(edges, edges[1:])):
        probes = np.linspace(lo, hi, 7, endpoint=False)
        assert {s.mode_at(float(p)) for p in probes} == {s.modes[i]}
