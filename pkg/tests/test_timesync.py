import random

import pytest

from rsmu_sim.timesync import ClockState, apply_time_signal, clock_error, local_time, new_clock, skew_bound


def test_perfect_clock():
    assert local_time(ClockState(), 12345.0) == 12345.0


def test_constant_offset():
    assert local_time(ClockState(offset=5.0), 777.0) == 782.0


def test_drift_accumulates():
    # 10e-6 * 100 s = 1 ms
    c = ClockState(offset=0.0, drift=10.0, last_correction=0.0)
    assert clock_error(c, 100_000.0) == pytest.approx(1.0)


def test_ideal_receiver_zeroes_offset():
    c = apply_time_signal(ClockState(offset=7.0, drift=3.0, residual_bound=0.0), 5000.0, random.Random(1))
    assert c.offset == 0.0
    assert c.drift == 3.0
    assert c.last_correction == 5000.0


def test_correction_respects_bound():
    rng = random.Random(5)
    for _ in range(100):
        c = apply_time_signal(ClockState(offset=5.0, residual_bound=1.0), 0.0, rng)
        assert abs(c.offset) <= 1.0


def test_correction_reproducible():
    a = apply_time_signal(ClockState(offset=5.0), 0.0, random.Random(77))
    b = apply_time_signal(ClockState(offset=5.0), 0.0, random.Random(77))
    assert a == b


def test_new_clock_within_bounds():
    c = new_clock(random.Random(0), 100.0, 1.0, 10.0)
    assert abs(c.drift) <= 10.0 and abs(c.offset) <= 1.0 and c.last_correction == 100.0


def test_skew_bound_defaults():
    assert skew_bound(1.0, 10.0, 60_000.0) == pytest.approx(3.2)


def test_negative_bound_rejected():
    with pytest.raises(ValueError):
        ClockState(residual_bound=-1)
