"""Scenario file schema (JSON, versioned)."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

SCHEMA_VERSION = 1

Carriageway = Literal["east", "west"]


class ScenarioError(ValueError):
    """Invalid scenario; ``errors`` lists every violation found."""

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.errors))


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class JunctionConfig(_Model):
    id: str
    kind: Literal["exit", "entrance"]
    station: float
    ramp_length: float = Field(300.0, gt=0)
    carriageway: Carriageway = "east"


class GeometryConfig(_Model):
    mainline_length: float = Field(gt=0)
    carriageway_separation: float = Field(20.0, ge=0)
    junctions: List[JunctionConfig] = []


class DeploymentConfig(_Model):
    spacing: float = Field(1200.0, gt=0)
    stations: Optional[List[float]] = None
    include_ramps: bool = True
    height: float = Field(12.0, gt=10.0)
    comm_range: float = Field(1000.0, gt=0)
    effective_range: float = Field(600.0, gt=0)
    allow_invalid: bool = False


class ChannelConfig(_Model):
    profile: Literal["dsrc", "cv2x"] = "cv2x"
    overrides: Dict[str, Any] = {}
    lossless: bool = False


class ProtocolConfig(_Model):
    report_period_ms: float = Field(100.0, gt=0)
    broadcast_period_ms: float = Field(100.0, gt=0)
    sync_period_ms: float = Field(200.0, gt=0)
    d_dual: float = Field(200.0, ge=0)
    full_sync_every: int = Field(10, ge=0)
    view_ttl_ms: float = Field(2000.0, gt=0)
    evict_after_ms: float = Field(5000.0, gt=0)
    preadmit_evict_after_ms: float = Field(60000.0, gt=0)
    perception_radius: float = Field(150.0, gt=0)
    detection_delay_ms: float = Field(500.0, ge=0)
    link_timeout_ms: float = Field(2000.0, ge=0)


class TimesyncConfig(_Model):
    residual_bound_ms: float = Field(1.0, ge=0)
    max_drift_ppm: float = Field(10.0, ge=0)
    period_s: float = Field(60.0, gt=0)


class KinematicsConfig(_Model):
    max_accel: float = Field(2.0, gt=0)
    max_decel: float = Field(6.0, gt=0)
    comfort_decel: float = Field(2.0, gt=0)
    headway_s: float = Field(1.5, gt=0)
    standstill_gap: float = Field(2.0, gt=0)


class VehicleConfig(_Model):
    entry_time_s: float = Field(0.0, ge=0)
    carriageway: Carriageway = "east"
    entry: Optional[str] = None
    exit: Optional[str] = None
    desired_speed: float = Field(30.0, gt=0)


class RouteConfig(_Model):
    entry: Optional[str] = None
    exit: Optional[str] = None


class FleetConfig(_Model):
    """Deterministic fleet pattern: attributes cycle through the given lists."""

    count: int = Field(0, ge=0)
    start_s: float = Field(0.0, ge=0)
    interval_s: float = Field(2.0, ge=0)
    carriageways: List[Carriageway] = ["east"]
    speeds: List[float] = [30.0]
    routes: List[RouteConfig] = Field(default_factory=lambda: [RouteConfig()])


class EventConfig(_Model):
    id: str
    kind: Literal["accident", "rockfall", "bridge-fracture", "obstacle"]
    carriageway: Carriageway = "east"
    station: float
    onset_s: float = Field(ge=0)
    cleared_s: Optional[float] = None


class InfraConfig(_Model):
    id: str
    kind: str
    carriageway: Carriageway = "east"
    start: float
    end: float


class ScenarioConfig(_Model):
    schema_version: Literal[1] = SCHEMA_VERSION
    name: str = "scenario"
    seed: int
    duration_s: float = Field(gt=0)
    tick_ms: float = Field(100.0, gt=0)
    geometry: GeometryConfig
    deployment: DeploymentConfig = Field(default_factory=DeploymentConfig)
    channel: ChannelConfig = Field(default_factory=ChannelConfig)
    protocol: ProtocolConfig = Field(default_factory=ProtocolConfig)
    timesync: TimesyncConfig = Field(default_factory=TimesyncConfig)
    kinematics: KinematicsConfig = Field(default_factory=KinematicsConfig)
    vehicles: List[VehicleConfig] = []
    fleet: Optional[FleetConfig] = None
    events: List[EventConfig] = []
    infrastructure: List[InfraConfig] = []

    @model_validator(mode="after")
    def _cross_checks(self):
        errors = []
        tick = self.tick_ms

        def multiple(value: float, name: str):
            k = value / tick
            if abs(k - round(k)) > 1e-9 or round(k) < 1:
                errors.append(f"{name} ({value}) must be a positive multiple of tick_ms ({tick})")

        p = self.protocol
        multiple(p.report_period_ms, "protocol.report_period_ms")
        multiple(p.broadcast_period_ms, "protocol.broadcast_period_ms")
        multiple(p.sync_period_ms, "protocol.sync_period_ms")
        multiple(self.timesync.period_s * 1000.0, "timesync.period_s")
        if p.link_timeout_ms >= p.evict_after_ms:
            errors.append("protocol.link_timeout_ms must be below protocol.evict_after_ms")
        if self.deployment.effective_range > self.deployment.comm_range:
            errors.append("deployment.effective_range exceeds deployment.comm_range")
        length = self.geometry.mainline_length
        for ev in self.events:
            if not 0.0 <= ev.station <= length:
                errors.append(f"event {ev.id!r}: location off-network (station {ev.station})")
            if ev.onset_s > self.duration_s:
                errors.append(f"event {ev.id!r}: onset after the end of the run")
            if ev.cleared_s is not None and ev.cleared_s <= ev.onset_s:
                errors.append(f"event {ev.id!r}: cleared before onset")
        if len({e.id for e in self.events}) != len(self.events):
            errors.append("duplicate event ids")
        for rec in self.infrastructure:
            if not 0.0 <= rec.start <= rec.end <= length:
                errors.append(f"infrastructure {rec.id!r}: span outside the mainline")
        if self.deployment.stations is not None:
            for s in self.deployment.stations:
                if not 0.0 <= s <= length:
                    errors.append(f"deployment station {s} out of range")
        if self.fleet is not None:
            f = self.fleet
            if not (f.carriageways and f.speeds and f.routes):
                errors.append("fleet lists must be non-empty")
            if any(s <= 0 for s in f.speeds):
                errors.append("fleet speeds must be positive")
        if errors:
            raise ValueError("; ".join(errors))
        return self


def _format_errors(exc: ValidationError) -> List[str]:
    out = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in err["loc"]) or "<root>"
        msg = err["msg"]
        if msg.startswith("Value error, "):
            # cross-field checks pack several violations into one message
            for part in msg[len("Value error, "):].split("; "):
                out.append(f"{loc}: {part}" if loc != "<root>" else part)
        else:
            out.append(f"{loc}: {msg}")
    return out


def parse_scenario(data: Union[Dict[str, Any], ScenarioConfig]) -> ScenarioConfig:
    if isinstance(data, ScenarioConfig):
        return data
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ScenarioError(_format_errors(exc)) from None


def load_scenario(path: Union[str, Path]) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError([f"cannot read {path}: {exc.strerror or exc}"]) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}"]) from None
    return parse_scenario(data)
