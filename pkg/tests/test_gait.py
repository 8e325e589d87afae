import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wheelleg.gait import contact_flags, crawl, drive, make_gait, schedule_horizon, trot


@pytest.mark.parametrize("t", [0.0, 0.3, 1.7, 123.4])
def test_driving_always_in_contact(t):
    assert contact_flags(drive(), t) == (True,) * 4


def test_trot_flags_and_periodicity():
    g = trot(stride=0.8, duty=0.5)
    assert contact_flags(g, 0.25 * 0.8) == (False, True, True, False)
    assert contact_flags(g, 0.75 * 0.8) == (True, False, False, True)
    assert contact_flags(g, 0.8) == contact_flags(g, 0.0)
    assert g.duty_factor(0) == pytest.approx(0.5)


def test_schedule_driving():
    s = schedule_horizon(drive(), 0.3, 2.0)
    assert s.phases == (((True,) * 4, 2.0),)


def test_schedule_trot_two_phases():
    s = schedule_horizon(trot(0.8, 0.5), 0.0, 0.8)
    assert [f for f, _ in s.phases] == [(False, True, True, False), (True, False, False, True)]
    np.testing.assert_allclose([d for _, d in s.phases], [0.4, 0.4], atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 50.0), st.floats(0.05, 3.0), st.sampled_from(["trot", "crawl", "drive"]),
       st.floats(0.0, 0.08))
def test_schedule_durations_sum_to_horizon(t0, tau, name, min_phase):
    g = make_gait(name)
    s = schedule_horizon(g, t0, tau, min_phase)
    assert abs(sum(d for _, d in s.phases) - tau) < 1e-9
    assert all(d > 0 for _, d in s.phases)
    # neighbouring phases always differ
    assert all(a[0] != b[0] for a, b in zip(s.phases[:-1], s.phases[1:]))


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 20.0), st.floats(0.1, 2.0))
def test_schedule_flags_match_gait_without_merging(t0, tau):
    g = crawl()
    s = schedule_horizon(g, t0, tau)
    for (flags, d), ts in zip(s.phases, s.start_times):
        if d > 1e-6:
            assert contact_flags(g, ts + 0.5 * d) == flags


def test_make_gait_explicit_and_errors():
    g = make_gait({"name": "custom", "stride": 1.0, "swing": {"LF": [[0.1, 0.3]]}})
    assert contact_flags(g, 0.2) == (False, True, True, True)
    with pytest.raises(ValueError):
        make_gait("gallop")
    with pytest.raises(ValueError):
        make_gait({"name": "x", "swing": {"LF": [[0.5, 0.2]]}})
    with pytest.raises(ValueError):
        schedule_horizon(trot(), 0.0, 0.0)
