"""Device clocks disciplined by periodic shortwave time signals."""
from __future__ import annotations

import random
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class ClockState:
    offset: float = 0.0  # ms, device time minus true time at last_correction
    drift: float = 0.0  # ppm
    last_correction: float = 0.0  # true time, ms
    residual_bound: float = 1.0  # ms

    def __post_init__(self):
        if self.residual_bound < 0:
            raise ValueError("residual_bound must be non-negative")


def local_time(clock: ClockState, true_time: float) -> float:
    return true_time + clock.offset + clock.drift * (true_time - clock.last_correction) / 1e6


def clock_error(clock: ClockState, true_time: float) -> float:
    return local_time(clock, true_time) - true_time


def apply_time_signal(clock: ClockState, true_time: float, rng: random.Random) -> ClockState:
    offset = rng.uniform(-clock.residual_bound, clock.residual_bound)
    return replace(clock, offset=offset, last_correction=true_time)


def new_clock(rng: random.Random, true_time: float, residual_bound: float, max_drift_ppm: float) -> ClockState:
    """A freshly powered device: drift drawn first, then an initial correction."""
    drift = rng.uniform(-max_drift_ppm, max_drift_ppm)
    return apply_time_signal(ClockState(0.0, drift, true_time, residual_bound), true_time, rng)


def skew_bound(residual_bound: float, max_drift_ppm: float, period_ms: float) -> float:
    """Worst-case difference between any two clocks on the same broadcast schedule."""
    return 2.0 * (residual_bound + max_drift_ppm * period_ms / 1e6)
