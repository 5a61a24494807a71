"""RSMU placement rules, jurisdiction partitioning and coverage checks."""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .topology import CARRIAGEWAYS, Point, RampJunction, RoadNetwork

DEFAULT_SPACING = 1200.0
DEFAULT_HEIGHT = 12.0
DEFAULT_COMM_RANGE = 1000.0
DEFAULT_EFFECTIVE_RANGE = 600.0
EXIT_BEFORE = 100.0
EXIT_AFTER = 50.0
ENTRANCE_BEFORE = 100.0
MIN_HEIGHT = 10.0


class DeploymentError(ValueError):
    pass


@dataclass(frozen=True)
class RsmuSpec:
    id: int
    carriageway: str
    station: float
    position: Point
    height: float = DEFAULT_HEIGHT
    comm_range: float = DEFAULT_COMM_RANGE
    effective_range: float = DEFAULT_EFFECTIVE_RANGE
    # half-open [start, end); the last jurisdiction on a carriageway also owns ``end``
    jurisdiction: Optional[Tuple[float, float]] = None
    neighbors: Tuple[int, ...] = ()
    role: str = "mainline"

    def __post_init__(self):
        if self.height <= MIN_HEIGHT:
            raise DeploymentError(f"RSMU height must exceed {MIN_HEIGHT} m, got {self.height}")
        if self.effective_range > self.comm_range:
            raise DeploymentError("effective_range exceeds comm_range")
        if self.jurisdiction is not None and self.jurisdiction[1] <= self.jurisdiction[0]:
            raise DeploymentError(f"empty jurisdiction for RSMU {self.id}")

    @property
    def jurisdiction_length(self) -> float:
        start, end = self.jurisdiction
        return end - start

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "carriageway": self.carriageway,
            "station": self.station,
            "position": list(self.position),
            "height": self.height,
            "comm_range": self.comm_range,
            "effective_range": self.effective_range,
            "jurisdiction": list(self.jurisdiction) if self.jurisdiction else None,
            "neighbors": list(self.neighbors),
            "role": self.role,
        }


@dataclass
class CoverageReport:
    valid: bool
    worst_distance: float
    uncovered: Dict[str, List[Tuple[float, float]]]
    uncovered_count: int
    spacing_violations: List[Tuple[int, int, float]]

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "worst_distance": round(self.worst_distance, 6),
            "uncovered_count": self.uncovered_count,
            "uncovered_bands": {cw: [list(b) for b in bands] for cw, bands in self.uncovered.items()},
            "spacing_violations": [list(v) for v in self.spacing_violations],
        }


@dataclass
class DeploymentPlan:
    nodes: Tuple[RsmuSpec, ...]
    order: Dict[str, Tuple[int, ...]]
    mainline_length: float
    report: Optional[CoverageReport] = None
    _by_id: Dict[int, RsmuSpec] = field(default_factory=dict, repr=False)
    _starts: Dict[str, List[float]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._by_id = {n.id: n for n in self.nodes}
        self._starts = {cw: [self._by_id[i].jurisdiction[0] for i in ids] for cw, ids in self.order.items()}

    def node(self, rsmu_id: int) -> RsmuSpec:
        return self._by_id[rsmu_id]

    def __contains__(self, rsmu_id) -> bool:
        return rsmu_id in self._by_id

    def owner_of(self, carriageway: str, station: float) -> int:
        ids = self.order[carriageway]
        k = bisect.bisect_right(self._starts[carriageway], station) - 1
        return ids[max(0, min(k, len(ids) - 1))]

    def successor(self, rsmu_id: int) -> Optional[int]:
        ids = self.order[self._by_id[rsmu_id].carriageway]
        k = ids.index(rsmu_id)
        return ids[k + 1] if k + 1 < len(ids) else None

    def predecessor(self, rsmu_id: int) -> Optional[int]:
        ids = self.order[self._by_id[rsmu_id].carriageway]
        k = ids.index(rsmu_id)
        return ids[k - 1] if k > 0 else None

    def to_dict(self) -> dict:
        out = {
            "mainline_length": self.mainline_length,
            "nodes": [n.to_dict() for n in self.nodes],
            "order": {cw: list(ids) for cw, ids in self.order.items()},
        }
        if self.report is not None:
            out["coverage"] = self.report.to_dict()
        return out


def _node(network: RoadNetwork, carriageway: str, station: float, role: str, **kw) -> RsmuSpec:
    return RsmuSpec(0, carriageway, float(station), network.mainline_point(carriageway, station), role=role, **kw)


def mainline_stations(length: float, spacing: float = DEFAULT_SPACING) -> List[float]:
    if spacing <= 0:
        raise DeploymentError("spacing must be positive")
    n = int(math.floor(length / spacing + 1e-9))
    xs = [k * spacing for k in range(n + 1)]
    # end cap: without it the tail would sit farther than half a spacing from the last node
    if length - xs[-1] > spacing / 2.0 + 1e-9:
        xs.append(float(length))
    return xs


def plan_mainline(network: RoadNetwork, spacing: float = DEFAULT_SPACING, **node_kw) -> List[RsmuSpec]:
    """Nodes on both sides of the road at the same x positions."""
    xs = mainline_stations(network.mainline_length, spacing)
    nodes = []
    for cw in CARRIAGEWAYS:
        for x in xs:
            station = x if cw == "east" else network.mainline_length - x
            nodes.append(_node(network, cw, station, "mainline", **node_kw))
    return nodes


def plan_ramp_exit(junction: RampJunction, network: Optional[RoadNetwork] = None, **node_kw) -> List[RsmuSpec]:
    if junction.kind != "exit":
        raise DeploymentError("wrong junction kind: expected exit")
    end = network.mainline_length if network is not None else math.inf
    before = max(0.0, junction.station - EXIT_BEFORE)
    after = min(end, junction.station + EXIT_AFTER)
    if network is None:
        return [RsmuSpec(0, junction.carriageway, s, (s, 0.0), role="ramp-exit", **node_kw) for s in (before, after)]
    return [_node(network, junction.carriageway, s, "ramp-exit", **node_kw) for s in (before, after)]


def plan_ramp_entrance(junction: RampJunction, network: Optional[RoadNetwork] = None, **node_kw) -> RsmuSpec:
    if junction.kind != "entrance":
        raise DeploymentError("wrong junction kind: expected entrance")
    s = max(0.0, junction.station - ENTRANCE_BEFORE)
    if network is None:
        return RsmuSpec(0, junction.carriageway, s, (s, 0.0), role="ramp-entrance", **node_kw)
    return _node(network, junction.carriageway, s, "ramp-entrance", **node_kw)


def assign_jurisdictions(nodes: Iterable[RsmuSpec], network: RoadNetwork) -> DeploymentPlan:
    """Number nodes, split each carriageway at station midpoints, link neighbors.

    Ids run 1..n along the east carriageway, then continue along the west one,
    each in travel order.
    """
    per_cw: Dict[str, List[RsmuSpec]] = {cw: [] for cw in CARRIAGEWAYS}
    for n in nodes:
        per_cw[n.carriageway].append(n)

    out: List[RsmuSpec] = []
    order: Dict[str, Tuple[int, ...]] = {}
    next_id = 1
    for cw in CARRIAGEWAYS:
        group = sorted(per_cw[cw], key=lambda n: n.station)
        if not group:
            raise DeploymentError(f"no RSMU on carriageway {cw}")
        stations = [n.station for n in group]
        if any(b <= a for a, b in zip(stations, stations[1:])):
            raise DeploymentError(f"RSMU stations on {cw} must be strictly increasing")
        ids = list(range(next_id, next_id + len(group)))
        next_id += len(group)
        bounds = [0.0] + [(a + b) / 2.0 for a, b in zip(stations, stations[1:])] + [network.mainline_length]
        for k, n in enumerate(group):
            neighbors = tuple(i for i in (ids[k - 1] if k > 0 else None,
                                          ids[k + 1] if k + 1 < len(ids) else None) if i is not None)
            out.append(replace(n, id=ids[k], jurisdiction=(bounds[k], bounds[k + 1]), neighbors=neighbors))
        order[cw] = tuple(ids)
    return DeploymentPlan(tuple(out), order, network.mainline_length)


def dedupe_stations(nodes: Sequence[RsmuSpec]) -> List[RsmuSpec]:
    """Drop later nodes that coincide with an earlier one on the same carriageway."""
    seen = set()
    out = []
    for n in nodes:
        key = (n.carriageway, round(n.station, 6))
        if key not in seen:
            seen.add(key)
            out.append(n)
    return out


def plan_deployment(network: RoadNetwork, spacing: float = DEFAULT_SPACING,
                    stations: Optional[Sequence[float]] = None, include_ramps: bool = True,
                    **node_kw) -> DeploymentPlan:
    """Mainline nodes (or explicit stations on both sides) plus ramp-area nodes."""
    if stations is not None:
        nodes = [_node(network, cw, s, "mainline", **node_kw) for cw in CARRIAGEWAYS for s in stations]
    else:
        nodes = plan_mainline(network, spacing, **node_kw)
    if include_ramps:
        for j in network.junctions:
            if j.kind == "exit":
                nodes.extend(plan_ramp_exit(j, network, **node_kw))
            else:
                nodes.append(plan_ramp_entrance(j, network, **node_kw))
    return assign_jurisdictions(dedupe_stations(nodes), network)


def _bands(stations: np.ndarray, mask: np.ndarray, grid: float) -> List[Tuple[float, float]]:
    bands = []
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return bands
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate(([idx[0]], idx[breaks + 1]))
    ends = np.concatenate((idx[breaks], [idx[-1]]))
    for a, b in zip(starts, ends):
        bands.append((float(stations[a]), float(stations[b])))
    return bands


def validate_coverage(plan: DeploymentPlan, network: RoadNetwork, grid: float = 1.0,
                      max_spacing: float = DEFAULT_SPACING, spacing_tolerance: float = 1.0) -> CoverageReport:
    """Grid-scan every carriageway station against its jurisdiction owner."""
    worst = 0.0
    uncovered: Dict[str, List[Tuple[float, float]]] = {}
    count = 0
    violations: List[Tuple[int, int, float]] = []
    length = network.mainline_length
    for cw in CARRIAGEWAYS:
        ids = plan.order[cw]
        specs = [plan.node(i) for i in ids]
        stations = np.arange(0.0, length + grid / 2.0, grid)
        stations[-1] = min(stations[-1], length)
        starts = np.array([s.jurisdiction[0] for s in specs])
        owner = np.clip(np.searchsorted(starts, stations, side="right") - 1, 0, len(specs) - 1)
        nx = np.array([s.position[0] for s in specs])[owner]
        ny = np.array([s.position[1] for s in specs])[owner]
        rng = np.array([s.effective_range for s in specs])[owner]
        px = stations if cw == "east" else length - stations
        py = network.centerline_y(cw)
        dist = np.hypot(px - nx, py - ny)
        worst = max(worst, float(dist.max()))
        mask = dist > rng + 1e-9
        count += int(mask.sum())
        uncovered[cw] = _bands(stations, mask, grid)
        for a, b in zip(specs, specs[1:]):
            gap = b.station - a.station
            if gap > max_spacing + spacing_tolerance:
                violations.append((a.id, b.id, gap))
    return CoverageReport(count == 0 and not violations, worst, uncovered, count, violations)
