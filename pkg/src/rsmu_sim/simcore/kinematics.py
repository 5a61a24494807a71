"""Longitudinal vehicle motion: free-road acceleration plus headway keeping."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple


@dataclass(frozen=True)
class VehicleKinematics:
    desired_speed: float
    max_accel: float = 2.0
    max_decel: float = 6.0
    comfort_decel: float = 2.0
    headway: float = 1.5  # s
    standstill_gap: float = 2.0  # m

    def __post_init__(self):
        if self.headway <= 0:
            raise ValueError("headway must be positive")


@dataclass(frozen=True)
class MotionStep:
    speed: float
    acceleration: float
    braking: bool
    distance: float


def step_vehicle(kin: VehicleKinematics, speed: float, leader: Optional[Tuple[float, float]],
                 tick_s: float) -> MotionStep:
    """One tick of motion.

    ``leader`` is ``(gap_m, leader_speed)`` for the nearest perceived obstacle
    ahead, or None on a free road.  Deceleration never exceeds ``max_decel``.
    """
    if tick_s <= 0:
        raise ValueError("tick must be positive")
    v = speed
    a = min(kin.max_accel, max(-kin.comfort_decel, (kin.desired_speed - v) / tick_s))
    braking = False
    if leader is not None:
        gap, v_lead = leader
        room = gap - kin.standstill_gap
        if gap < kin.standstill_gap + kin.headway * v:
            a = min(a, -kin.comfort_decel)
            braking = True
        if room <= 0:
            if v > 0:
                a, braking = -kin.max_decel, True
            else:
                a = min(a, 0.0)
        else:
            closing = v - v_lead
            if closing > 0:
                need = closing * closing / (2.0 * room)
                if need >= kin.comfort_decel:
                    a = min(a, -min(kin.max_decel, need))
                    braking = True
            # do not accelerate past the speed from which a comfortable stop still fits
            v_safe = v_lead + math.sqrt(2.0 * kin.comfort_decel * room)
            a_cap = (v_safe - v) / tick_s
            if a_cap < a:
                a = a_cap
                braking = braking or a < 0
    a = max(a, -kin.max_decel)
    if a < 0 and not braking:
        # easing down to the desired speed is not braking
        braking = False

    v_next = v + a * tick_s
    if v_next < 0:
        # stops within the tick
        dist = v * v / (2.0 * -a) if a < 0 else 0.0
        return MotionStep(0.0, a, braking, dist)
    dist = v * tick_s + 0.5 * a * tick_s * tick_s
    return MotionStep(v_next, a, braking, max(0.0, dist))
