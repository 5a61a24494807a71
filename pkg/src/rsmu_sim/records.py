"""Plain data records shared by the protocol, the global view and the log."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .topology import RoadPosition

EVENT_KINDS = ("accident", "rockfall", "bridge-fracture", "obstacle")
MANEUVERS = ("keep-lane", "exit-at", "merge")


@dataclass(frozen=True)
class DrivingIntent:
    speed: float
    maneuver: str = "keep-lane"
    junction: Optional[str] = None
    horizon: float = 5.0

    def __post_init__(self):
        if self.speed < 0 or self.horizon <= 0:
            raise ValueError("intent needs speed >= 0 and horizon > 0")
        if self.maneuver not in MANEUVERS:
            raise ValueError(f"unknown maneuver {self.maneuver!r}")


@dataclass(frozen=True)
class VehicleStatus:
    position: RoadPosition
    speed: float
    heading: float  # degrees, 0 = +x
    acceleration: float
    braking: bool
    steering_angle: float
    timestamp: float  # device time, ms


@dataclass(frozen=True)
class VehicleSnapshot:
    vehicle_id: int
    status: VehicleStatus
    intent: DrivingIntent
    source: int  # rsmu that received the update first-hand
    timestamp: float


@dataclass(frozen=True)
class AbnormalEvent:
    id: str
    kind: str
    location: RoadPosition
    onset: float  # true time, ms
    detected: Optional[float] = None  # device time of the detecting rsmu
    detector: Optional[int] = None
    cleared: Optional[float] = None

    @property
    def active(self) -> bool:
        return self.cleared is None


@dataclass(frozen=True)
class InfraRecord:
    id: str
    kind: str
    carriageway: str
    start: float
    end: float
    condition: str = "normal"
    timestamp: float = 0.0
    source: int = 0


# -- dict round trips --------------------------------------------------------

def position_to_dict(p: RoadPosition) -> dict:
    return {
        "carriageway": p.carriageway,
        "station": p.station,
        "lateral_offset": p.lateral_offset,
        "on_ramp": list(p.on_ramp) if p.on_ramp is not None else None,
    }


def position_from_dict(d: dict) -> RoadPosition:
    ramp = d.get("on_ramp")
    return RoadPosition(d["carriageway"], d["station"], d.get("lateral_offset", 0.0),
                        (ramp[0], ramp[1]) if ramp is not None else None)


def status_to_dict(s: VehicleStatus) -> dict:
    return {
        "position": position_to_dict(s.position),
        "speed": s.speed,
        "heading": s.heading,
        "acceleration": s.acceleration,
        "braking": s.braking,
        "steering_angle": s.steering_angle,
        "timestamp": s.timestamp,
    }


def status_from_dict(d: dict) -> VehicleStatus:
    return VehicleStatus(position_from_dict(d["position"]), d["speed"], d["heading"], d["acceleration"],
                         d["braking"], d["steering_angle"], d["timestamp"])


def intent_to_dict(i: DrivingIntent) -> dict:
    return {"speed": i.speed, "maneuver": i.maneuver, "junction": i.junction, "horizon": i.horizon}


def intent_from_dict(d: dict) -> DrivingIntent:
    return DrivingIntent(d["speed"], d["maneuver"], d.get("junction"), d["horizon"])


def snapshot_to_dict(s: VehicleSnapshot) -> dict:
    return {
        "vehicle": s.vehicle_id,
        "status": status_to_dict(s.status),
        "intent": intent_to_dict(s.intent),
        "source": s.source,
        "timestamp": s.timestamp,
    }


def snapshot_from_dict(d: dict) -> VehicleSnapshot:
    return VehicleSnapshot(d["vehicle"], status_from_dict(d["status"]), intent_from_dict(d["intent"]),
                           d["source"], d["timestamp"])


def event_to_dict(e: AbnormalEvent) -> dict:
    return {
        "id": e.id,
        "kind": e.kind,
        "location": position_to_dict(e.location),
        "onset": e.onset,
        "detected": e.detected,
        "detector": e.detector,
        "cleared": e.cleared,
    }


def event_from_dict(d: dict) -> AbnormalEvent:
    return AbnormalEvent(d["id"], d["kind"], position_from_dict(d["location"]), d["onset"],
                         d.get("detected"), d.get("detector"), d.get("cleared"))


def infra_to_dict(r: InfraRecord) -> dict:
    return {
        "id": r.id, "kind": r.kind, "carriageway": r.carriageway, "start": r.start, "end": r.end,
        "condition": r.condition, "timestamp": r.timestamp, "source": r.source,
    }


def infra_from_dict(d: dict) -> InfraRecord:
    return InfraRecord(d["id"], d["kind"], d["carriageway"], d["start"], d["end"], d["condition"],
                       d["timestamp"], d["source"])
