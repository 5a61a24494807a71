"""Abstract lossy V2I channel with a distance knee and a density penalty."""
from __future__ import annotations

import random
from dataclasses import dataclass, fields, replace
from typing import Any, Mapping, Optional, Tuple


class ChannelError(ValueError):
    pass


@dataclass(frozen=True)
class TechProfile:
    name: str
    max_range: float
    knee_distance: float
    base_loss: float
    knee_loss: float
    latency_base: float  # ms
    latency_jitter: float  # ms, uniform half-width
    density_threshold: float  # vehicles per km
    density_penalty: float
    lossless: bool = False

    def __post_init__(self):
        if not 0.0 <= self.base_loss <= self.knee_loss <= 1.0:
            raise ChannelError("need 0 <= base_loss <= knee_loss <= 1")
        if not self.knee_distance < self.max_range:
            raise ChannelError("knee_distance must be below max_range")
        if self.latency_base < 0 or self.latency_jitter < 0 or self.latency_jitter > self.latency_base:
            raise ChannelError("latencies must be non-negative and jitter must not exceed the base")
        if not 0.0 <= self.density_penalty <= 1.0:
            raise ChannelError("density_penalty must be a probability")

    @property
    def max_latency(self) -> float:
        return self.latency_base + self.latency_jitter

    def with_overrides(self, overrides: Optional[Mapping[str, Any]]) -> "TechProfile":
        if not overrides:
            return self
        known = {f.name for f in fields(self)}
        bad = set(overrides) - known
        if bad:
            raise ChannelError(f"unknown profile fields: {sorted(bad)}")
        return replace(self, **overrides)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


PRESETS = {
    "dsrc": TechProfile("dsrc", max_range=500.0, knee_distance=300.0, base_loss=0.01, knee_loss=0.10,
                        latency_base=15.0, latency_jitter=5.0, density_threshold=100.0, density_penalty=0.15),
    "cv2x": TechProfile("cv2x", max_range=1000.0, knee_distance=600.0, base_loss=0.0, knee_loss=0.02,
                        latency_base=10.0, latency_jitter=5.0, density_threshold=100.0, density_penalty=0.0),
}


def preset(name: str) -> TechProfile:
    try:
        return PRESETS[name]
    except KeyError:
        raise ChannelError(f"unknown profile {name!r}") from None


def loss_probability(profile: TechProfile, distance: float, density: float = 0.0) -> float:
    if distance < 0:
        raise ChannelError("distance must be non-negative")
    if profile.lossless:
        return 0.0
    if distance > profile.max_range:
        return 1.0
    if distance <= profile.knee_distance:
        p = profile.base_loss + (profile.knee_loss - profile.base_loss) * distance / profile.knee_distance
    else:
        span = profile.max_range - profile.knee_distance
        p = profile.knee_loss + (1.0 - profile.knee_loss) * (distance - profile.knee_distance) / span
    if density > profile.density_threshold:
        p += profile.density_penalty
    return min(1.0, p)


@dataclass(frozen=True)
class Transmission:
    sender: str
    receiver: str
    distance: float
    local_density: float
    payload: Any
    send_time: float  # true time, ms

    def __post_init__(self):
        if self.distance < 0 or self.local_density < 0:
            raise ChannelError("distance and density must be non-negative")


def sample_delivery(profile: TechProfile, tx: Transmission, rng: random.Random) -> Tuple[bool, Optional[float]]:
    """Return (delivered, arrival true-time).

    Exactly two draws per call (loss, then jitter) so the stream advances the
    same way whatever the verdict.
    """
    p = loss_probability(profile, tx.distance, tx.local_density)
    u_loss = rng.random()
    u_jit = rng.random()
    if u_loss < p:
        return False, None
    jitter = (2.0 * u_jit - 1.0) * profile.latency_jitter
    return True, tx.send_time + profile.latency_base + jitter
