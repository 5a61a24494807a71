import random

import pytest

from rsmu_sim.channel import ChannelError, PRESETS, Transmission, loss_probability, preset, sample_delivery


def test_cv2x_base_case():
    assert loss_probability(preset("cv2x"), 0, 10) == 0


def test_beyond_range_always_lost():
    assert loss_probability(preset("cv2x"), 1200, 0) == 1.0
    assert loss_probability(preset("dsrc"), 600, 0) == 1.0


def test_dsrc_interpolation():
    # 0.01 + (0.10 - 0.01) * 150 / 300
    assert loss_probability(preset("dsrc"), 150, 0) == pytest.approx(0.055)


def test_density_penalty_only_above_threshold():
    d = preset("dsrc")
    assert loss_probability(d, 150, 100) == pytest.approx(0.055)
    assert loss_probability(d, 150, 101) == pytest.approx(0.205)


def test_presets_table():
    assert preset("cv2x").max_range == 2 * preset("dsrc").max_range
    assert preset("cv2x").density_penalty == 0
    assert preset("dsrc").density_penalty == 0.15
    with pytest.raises(ChannelError):
        preset("wifi")


def test_lossless_override():
    p = PRESETS["dsrc"].with_overrides({"lossless": True})
    assert loss_probability(p, 10_000, 500) == 0.0


def test_unknown_override_rejected():
    with pytest.raises(ChannelError):
        PRESETS["dsrc"].with_overrides({"colour": "red"})


def test_negative_distance_rejected():
    with pytest.raises(ChannelError):
        loss_probability(preset("dsrc"), -1)


def _tx(d, density=0.0):
    return Transmission("V1", "R1", d, density, None, 1000.0)


def test_degenerate_sampling():
    rng = random.Random(0)
    cv = preset("cv2x")
    assert all(sample_delivery(cv, _tx(0), rng)[0] for _ in range(500))
    assert not any(sample_delivery(cv, _tx(2000), rng)[0] for _ in range(500))


def test_arrival_within_latency_bounds():
    rng = random.Random(3)
    d = preset("dsrc")
    for _ in range(200):
        ok, t = sample_delivery(d, _tx(10), rng)
        if ok:
            assert 1000 + 10 <= t <= 1000 + 20


def test_monte_carlo_matches_closed_form():
    rng = random.Random(2024)
    d = preset("dsrc")
    lost = sum(not sample_delivery(d, _tx(150), rng)[0] for _ in range(10_000))
    assert abs(lost / 10_000 - 0.055) <= 0.01


def test_two_draws_per_call_regardless_of_verdict():
    a, b = random.Random(9), random.Random(9)
    sample_delivery(preset("cv2x"), _tx(5000), a)
    b.random(), b.random()
    assert a.random() == b.random()
