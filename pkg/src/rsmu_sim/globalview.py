"""Spatio-temporal global view held by each RSMU, and the cloud registry.

Views are treated as immutable values: ``merge`` and friends always build a
new ``GlobalView``, so a view handed to a broadcast can be shared safely.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .deployment import RsmuSpec
from .records import AbnormalEvent, InfraRecord, VehicleSnapshot


class RegistryError(ValueError):
    pass


@dataclass(frozen=True)
class GlobalView:
    owner: int
    vehicles: Mapping[int, VehicleSnapshot] = field(default_factory=dict)
    infra: Mapping[str, InfraRecord] = field(default_factory=dict)
    events: Mapping[str, AbnormalEvent] = field(default_factory=dict)
    timestamp: float = 0.0

    def content(self) -> tuple:
        """Everything but the owner and view timestamp, for equality checks."""
        return (
            tuple(sorted(self.vehicles.items())),
            tuple(sorted(self.infra.items())),
            tuple(sorted(self.events.items())),
        )


def _snapshot_beats(a: VehicleSnapshot, b: VehicleSnapshot) -> bool:
    if a.timestamp != b.timestamp:
        return a.timestamp > b.timestamp
    if a.source != b.source:
        return a.source < b.source
    return repr(a) < repr(b)


def _infra_beats(a: InfraRecord, b: InfraRecord) -> bool:
    if a.timestamp != b.timestamp:
        return a.timestamp > b.timestamp
    if a.source != b.source:
        return a.source < b.source
    return repr(a) < repr(b)


def _event_rank(e: AbnormalEvent) -> tuple:
    # cleared > detected > pending; among equals the earliest detection wins
    return (e.cleared is not None, e.detected is not None,
            -(e.detected if e.detected is not None else 0.0))


def _event_beats(a: AbnormalEvent, b: AbnormalEvent) -> bool:
    ra, rb = _event_rank(a), _event_rank(b)
    if ra != rb:
        return ra > rb
    return repr(a) < repr(b)


def _union(mine: Mapping, theirs: Mapping, beats) -> dict:
    out = dict(mine)
    for key, rec in theirs.items():
        cur = out.get(key)
        if cur is None or beats(rec, cur):
            out[key] = rec
    return out


def merge(view: GlobalView, incoming: GlobalView) -> GlobalView:
    """Latest device timestamp wins; ties go to the smaller source RSMU id."""
    return GlobalView(
        owner=view.owner,
        vehicles=_union(view.vehicles, incoming.vehicles, _snapshot_beats),
        infra=_union(view.infra, incoming.infra, _infra_beats),
        events=_union(view.events, incoming.events, _event_beats),
        timestamp=max(view.timestamp, incoming.timestamp),
    )


def upsert_snapshot(view: GlobalView, snap: VehicleSnapshot) -> GlobalView:
    cur = view.vehicles.get(snap.vehicle_id)
    if cur is not None and not _snapshot_beats(snap, cur):
        return view
    vehicles = dict(view.vehicles)
    vehicles[snap.vehicle_id] = snap
    return replace(view, vehicles=vehicles)


def upsert_event(view: GlobalView, event: AbnormalEvent) -> GlobalView:
    cur = view.events.get(event.id)
    if cur is not None and not _event_beats(event, cur):
        return view
    events = dict(view.events)
    events[event.id] = event
    return replace(view, events=events)


def upsert_infra(view: GlobalView, rec: InfraRecord) -> GlobalView:
    cur = view.infra.get(rec.id)
    if cur is not None and not _infra_beats(rec, cur):
        return view
    infra = dict(view.infra)
    infra[rec.id] = rec
    return replace(view, infra=infra)


def prune(view: GlobalView, now: float, ttl: float) -> GlobalView:
    keep = {vid: s for vid, s in view.vehicles.items() if now - s.timestamp <= ttl}
    if len(keep) == len(view.vehicles):
        return view
    return replace(view, vehicles=keep)


def staleness(view: GlobalView, now: float, vehicles: Optional[Iterable[int]] = None) -> Tuple[Dict[int, float], float]:
    """Per-vehicle snapshot ages (clamped at zero) and their maximum."""
    ids = view.vehicles.keys() if vehicles is None else [v for v in vehicles if v in view.vehicles]
    ages = {vid: max(0.0, now - view.vehicles[vid].timestamp) for vid in ids}
    return ages, max(ages.values(), default=0.0)


@dataclass(frozen=True)
class QueryHit:
    snapshot: VehicleSnapshot
    predicted_station: float


def query(view: GlobalView, region: Tuple[float, float], horizon: float,
          carriageway: Optional[str] = None) -> List[QueryHit]:
    """Snapshots inside ``region`` (closed station interval) with constant-velocity prediction."""
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    lo, hi = region
    hits = []
    for vid in sorted(view.vehicles):
        snap = view.vehicles[vid]
        pos = snap.status.position
        if carriageway is not None and pos.carriageway != carriageway:
            continue
        if lo <= pos.station <= hi:
            hits.append(QueryHit(snap, pos.station + snap.status.speed * horizon))
    return hits


# -- cloud registry ----------------------------------------------------------

@dataclass(frozen=True)
class RegistryEntry:
    rsmu_id: int
    carriageway: str
    jurisdiction: Tuple[float, float]
    position: Tuple[float, float]
    comm_range: float
    effective_range: float
    neighbors: Tuple[int, ...]

    @classmethod
    def from_spec(cls, spec: RsmuSpec) -> "RegistryEntry":
        return cls(spec.id, spec.carriageway, spec.jurisdiction, spec.position, spec.comm_range,
                   spec.effective_range, spec.neighbors)


@dataclass(frozen=True)
class CloudRegistry:
    entries: Mapping[int, RegistryEntry] = field(default_factory=dict)
    version: int = 0


def registry_publish(registry: CloudRegistry, spec: RsmuSpec) -> CloudRegistry:
    entry = RegistryEntry.from_spec(spec)
    start, end = entry.jurisdiction
    for other in registry.entries.values():
        if other.rsmu_id == entry.rsmu_id or other.carriageway != entry.carriageway:
            continue
        o_start, o_end = other.jurisdiction
        if start < o_end and o_start < end:
            raise RegistryError(f"jurisdiction conflict between RSMU {entry.rsmu_id} and {other.rsmu_id}")
    entries = dict(registry.entries)
    entries[entry.rsmu_id] = entry
    return CloudRegistry(entries, registry.version + 1)


@dataclass(frozen=True)
class Directory:
    """The slice of the registry a VIU downloads before its trip."""

    entries: Mapping[int, RegistryEntry]
    version: int
    road_end: Mapping[str, float]

    def owner_of(self, carriageway: str, station: float) -> Optional[int]:
        for e in self.entries.values():
            if e.carriageway != carriageway:
                continue
            start, end = e.jurisdiction
            if start <= station < end or (station == end and end == self.road_end.get(carriageway)):
                return e.rsmu_id
        return None


def registry_prefetch(registry: CloudRegistry, route: Sequence[int]) -> Directory:
    missing = [r for r in route if r not in registry.entries]
    if missing:
        raise RegistryError(f"unknown jurisdiction(s) on route: {missing}")
    wanted = set(route)
    for r in route:
        wanted.update(n for n in registry.entries[r].neighbors if n in registry.entries)
    road_end: Dict[str, float] = {}
    for e in registry.entries.values():
        road_end[e.carriageway] = max(road_end.get(e.carriageway, 0.0), e.jurisdiction[1])
    return Directory({r: registry.entries[r] for r in sorted(wanted)}, registry.version, road_end)


# -- abnormal events ---------------------------------------------------------

def in_jurisdiction(spec: RsmuSpec, carriageway: str, station: float, road_length: float) -> bool:
    if carriageway != spec.carriageway:
        return False
    start, end = spec.jurisdiction
    return start <= station < end or (station == end and end >= road_length)


def detect_event(rsmu, ground_truth: Iterable[AbnormalEvent], now: float, detection_delay: float,
                 device_now: Optional[float] = None) -> List[AbnormalEvent]:
    """Events inside ``rsmu``'s jurisdiction whose detection instant has arrived.

    ``rsmu`` needs ``spec``, ``road_length`` and ``view``; already-known
    detections are skipped.  ``now`` is true time.
    """
    if detection_delay < 0:
        raise ValueError("detection_delay must be non-negative")
    found = []
    for ev in ground_truth:
        if now < ev.onset + detection_delay:
            continue
        if not in_jurisdiction(rsmu.spec, ev.location.carriageway, ev.location.station, rsmu.road_length):
            continue
        known = rsmu.view.events.get(ev.id)
        if known is not None and known.detected is not None:
            continue
        stamp = now if device_now is None else device_now
        found.append(replace(ev, detected=stamp, detector=rsmu.spec.id, cleared=None))
    return found
