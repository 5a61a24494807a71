"""Highway geometry: a straight mainline with ramp junctions.

Stations are linear references measured along each carriageway's direction of
travel.  The mainline lies on the x-axis; the ``east`` carriageway travels
towards +x and the ``west`` carriageway towards -x, so a west station ``s``
sits at ``x = mainline_length - s``.  Ramps are straight segments that meet
the mainline at their junction station, splayed outwards by ``RAMP_ANGLE``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Tuple, Union

EAST = "east"
WEST = "west"
CARRIAGEWAYS = (EAST, WEST)

RAMP_ANGLE = math.radians(15.0)

Point = Tuple[float, float]


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class RampJunction:
    id: str
    kind: str  # "exit" | "entrance"
    station: float
    ramp_length: float
    carriageway: str = EAST


@dataclass(frozen=True)
class RoadPosition:
    carriageway: str
    station: float
    lateral_offset: float = 0.0
    # (junction id, progress along the ramp in meters)
    on_ramp: Optional[Tuple[str, float]] = None
    arrived: bool = False


@dataclass(frozen=True)
class Route:
    """Entry/exit plan for one vehicle; ``None`` means the mainline end."""

    carriageway: str = EAST
    entry: Optional[str] = None
    exit: Optional[str] = None


@dataclass(frozen=True)
class RoadNetwork:
    mainline_length: float
    carriageway_separation: float = 20.0
    junctions: Tuple[RampJunction, ...] = field(default_factory=tuple)

    @property
    def carriageways(self) -> Tuple[str, str]:
        return CARRIAGEWAYS

    def junction(self, junction_id: str) -> RampJunction:
        for j in self.junctions:
            if j.id == junction_id:
                return j
        raise TopologyError(f"unknown junction {junction_id!r}")

    def centerline_y(self, carriageway: str) -> float:
        half = self.carriageway_separation / 2.0
        return -half if carriageway == EAST else half

    def _axes(self, carriageway: str) -> Tuple[Point, Point]:
        # unit travel direction and unit outward normal (away from the median)
        if carriageway == EAST:
            return (1.0, 0.0), (0.0, -1.0)
        return (-1.0, 0.0), (0.0, 1.0)

    def station_x(self, carriageway: str, station: float) -> float:
        return station if carriageway == EAST else self.mainline_length - station

    def mainline_point(self, carriageway: str, station: float, lateral_offset: float = 0.0) -> Point:
        return (self.station_x(carriageway, station), self.centerline_y(carriageway) + lateral_offset)

    def ramp_point(self, junction: RampJunction, progress: float) -> Point:
        (ux, uy), (nx, ny) = self._axes(junction.carriageway)
        mx, my = self.mainline_point(junction.carriageway, junction.station)
        c, s = math.cos(RAMP_ANGLE), math.sin(RAMP_ANGLE)
        if junction.kind == "exit":
            d = progress
            return (mx + d * (c * ux + s * nx), my + d * (c * uy + s * ny))
        d = junction.ramp_length - progress
        return (mx - d * c * ux + d * s * nx, my - d * c * uy + d * s * ny)

    def ramp_station(self, junction: RampJunction, progress: float) -> float:
        """Mainline station a ramp point projects onto."""
        c = math.cos(RAMP_ANGLE)
        if junction.kind == "exit":
            return min(self.mainline_length, junction.station + progress * c)
        return max(0.0, junction.station - (junction.ramp_length - progress) * c)

    def xy(self, position: Union[RoadPosition, Point]) -> Point:
        if not isinstance(position, RoadPosition):
            return (float(position[0]), float(position[1]))
        if position.on_ramp is not None:
            jid, progress = position.on_ramp
            return self.ramp_point(self.junction(jid), progress)
        return self.mainline_point(position.carriageway, position.station, position.lateral_offset)


def build_network(config: Mapping) -> RoadNetwork:
    """Build a validated network from the geometry section of a scenario."""
    errors = []
    length = float(config.get("mainline_length", 0.0))
    separation = float(config.get("carriageway_separation", 20.0))
    if length <= 0:
        errors.append("mainline_length must be positive")
    if separation < 0:
        errors.append("carriageway_separation must be non-negative")

    junctions = []
    seen = set()
    for raw in config.get("junctions", ()) or ():
        j = RampJunction(
            id=str(raw["id"]),
            kind=str(raw["kind"]),
            station=float(raw["station"]),
            ramp_length=float(raw.get("ramp_length", 300.0)),
            carriageway=str(raw.get("carriageway", EAST)),
        )
        if j.id in seen:
            errors.append(f"duplicate junction id {j.id!r}")
        seen.add(j.id)
        if j.kind not in ("exit", "entrance"):
            errors.append(f"junction {j.id!r}: unknown kind {j.kind!r}")
        if j.carriageway not in CARRIAGEWAYS:
            errors.append(f"junction {j.id!r}: unknown carriageway {j.carriageway!r}")
        if j.ramp_length <= 0:
            errors.append(f"junction {j.id!r}: ramp_length must be positive")
        if length > 0 and not 0.0 <= j.station <= length:
            errors.append(f"junction {j.id!r}: station out of range")
        junctions.append(j)

    for cw in CARRIAGEWAYS:
        for kind in ("exit", "entrance"):
            stations = [j.station for j in junctions if j.carriageway == cw and j.kind == kind]
            if len(set(stations)) != len(stations):
                errors.append(f"{cw} {kind} junctions share a station")

    if errors:
        raise TopologyError("; ".join(errors))
    junctions.sort(key=lambda j: (j.carriageway, j.station, j.kind, j.id))
    return RoadNetwork(length, separation, tuple(junctions))


# -- travel paths -----------------------------------------------------------

def _path_bounds(route: Route, network: RoadNetwork) -> Tuple[float, float, float, float]:
    """Return (entry ramp length, mainline start, mainline end, exit ramp length)."""
    r_in = r_out = 0.0
    s0, s1 = 0.0, network.mainline_length
    if route.entry is not None:
        j = network.junction(route.entry)
        if j.kind != "entrance" or j.carriageway != route.carriageway:
            raise TopologyError(f"route entry {route.entry!r} is not an entrance on {route.carriageway}")
        r_in, s0 = j.ramp_length, j.station
    if route.exit is not None:
        j = network.junction(route.exit)
        if j.kind != "exit" or j.carriageway != route.carriageway:
            raise TopologyError(f"route exit {route.exit!r} is not an exit on {route.carriageway}")
        r_out, s1 = j.ramp_length, j.station
    if s1 < s0:
        raise TopologyError("route exits before it enters")
    return r_in, s0, s1, r_out


def path_length(route: Route, network: RoadNetwork) -> float:
    r_in, s0, s1, r_out = _path_bounds(route, network)
    return r_in + (s1 - s0) + r_out


def path_coordinate(position: RoadPosition, route: Route, network: RoadNetwork) -> float:
    r_in, s0, s1, _ = _path_bounds(route, network)
    if position.on_ramp is not None:
        jid, progress = position.on_ramp
        if jid == route.entry:
            return progress
        return r_in + (s1 - s0) + progress
    return r_in + (position.station - s0)


def position_at(u: float, route: Route, network: RoadNetwork, lateral_offset: float = 0.0) -> RoadPosition:
    r_in, s0, s1, r_out = _path_bounds(route, network)
    cw = route.carriageway
    if route.entry is not None and u < r_in:
        j = network.junction(route.entry)
        return RoadPosition(cw, network.ramp_station(j, u), 0.0, (j.id, u))
    main = s1 - s0
    if route.exit is not None and u > r_in + main:
        j = network.junction(route.exit)
        p = min(u - r_in - main, r_out)
        return RoadPosition(cw, network.ramp_station(j, p), 0.0, (j.id, p))
    return RoadPosition(cw, s0 + (u - r_in), lateral_offset)


def start_position(route: Route, network: RoadNetwork) -> RoadPosition:
    return position_at(0.0, route, network)


def advance(position: RoadPosition, ds: float, network: RoadNetwork, route: Optional[Route] = None) -> RoadPosition:
    """Move ``ds`` meters along the route; clamps at the path end and flags arrival."""
    if ds < 0:
        raise TopologyError("ds must be non-negative")
    route = route or Route(position.carriageway)
    total = path_length(route, network)
    u = path_coordinate(position, route, network) + ds
    if u >= total:
        end = position_at(total, route, network, position.lateral_offset)
        return replace(end, arrived=True)
    return position_at(u, route, network, position.lateral_offset)


def radio_distance(a: Union[RoadPosition, Point], b: Union[RoadPosition, Point], network: RoadNetwork) -> float:
    """Euclidean distance in the plane; node heights are ignored."""
    ax, ay = network.xy(a)
    bx, by = network.xy(b)
    return math.hypot(ax - bx, ay - by)


def route_station_span(route: Route, network: RoadNetwork) -> Tuple[float, float]:
    """Range of mainline stations a route touches (ramps projected)."""
    lo = position_at(0.0, route, network).station
    hi = position_at(path_length(route, network), route, network).station
    return lo, hi


def validate_route(route: Route, network: RoadNetwork) -> None:
    if route.carriageway not in CARRIAGEWAYS:
        raise TopologyError(f"unknown carriageway {route.carriageway!r}")
    _path_bounds(route, network)


__all__ = [
    "EAST", "WEST", "CARRIAGEWAYS", "RampJunction", "RoadPosition", "Route", "RoadNetwork",
    "TopologyError", "build_network", "advance", "radio_distance", "path_length",
    "path_coordinate", "position_at", "start_position", "route_station_span", "validate_route",
]
