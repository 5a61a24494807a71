"""VIU and RSMU state machines.

A VIU holds an exclusive link to the RSMU owning its jurisdiction, opens a
second link to the next RSMU shortly before the boundary (ownership stays
put), and on crossing releases the old link.  RSMUs keep a vehicle table,
a global view, and fan out broadcasts and neighbor syncs on their tick.

Both classes are mutated in place by the engine, one call at a time.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Set, Tuple, Union

from .deployment import DeploymentPlan, RsmuSpec
from .globalview import (Directory, GlobalView, detect_event, in_jurisdiction, merge, prune, upsert_event,
                         upsert_infra, upsert_snapshot)
from .messages import (EventNotice, LinkAccept, LinkRelease, LinkRequest, Message, NeighborSync,
                       OwnershipClaim, OwnershipTransfer, RegistrySnapshot, StatusUpdate, ViewBroadcast,
                       addr_id, rsmu_addr, viu_addr)
from .records import AbnormalEvent, DrivingIntent, InfraRecord, VehicleSnapshot, VehicleStatus
from .timesync import ClockState
from .topology import RoadNetwork, Route, radio_distance

OWNED = "owned"
PRE_ADMITTED = "pre-admitted"


class ProtocolError(RuntimeError):
    pass


@dataclass(frozen=True)
class Unlinked:
    pass


@dataclass(frozen=True)
class Single:
    rsmu: int


@dataclass(frozen=True)
class Dual:
    current: int
    next: int


LinkMode = Union[Unlinked, Single, Dual]
UNLINKED = Unlinked()


@dataclass(frozen=True)
class ProtocolParams:
    report_period_ms: float = 100.0
    broadcast_period_ms: float = 100.0
    sync_period_ms: float = 200.0
    d_dual: float = 200.0
    full_sync_every: int = 10
    view_ttl_ms: float = 2000.0
    evict_after_ms: float = 5000.0
    preadmit_evict_after_ms: float = 60000.0
    perception_radius: float = 150.0
    detection_delay_ms: float = 500.0
    # a VIU that hears nothing from its owner this long drops the link; keep it under evict_after_ms
    link_timeout_ms: float = 2000.0


def ownership(viu: "Viu") -> int:
    link = viu.link
    if isinstance(link, Single):
        return link.rsmu
    if isinstance(link, Dual):
        return link.current
    raise ProtocolError("no owner: VIU is unlinked")


@dataclass
class Viu:
    vehicle_id: int
    route: Route
    clock: ClockState
    intent: DrivingIntent
    directory: Optional[Directory] = None
    link: LinkMode = UNLINKED
    progress: float = 0.0
    pending: Optional[int] = None
    next_accepted: bool = False
    next_report: float = 0.0
    last_view: Optional[Tuple[GlobalView, float]] = None
    known_events: Dict[str, AbnormalEvent] = field(default_factory=dict)
    status: Optional[VehicleStatus] = None
    directory_misses: int = 0
    last_heard: float = 0.0  # device time of the latest downlink from the owner
    link_timeouts: int = 0

    @property
    def addr(self) -> str:
        return viu_addr(self.vehicle_id)

    @property
    def owner(self) -> Optional[int]:
        return None if isinstance(self.link, Unlinked) else ownership(self)

    # -- jurisdiction lookups: directory first, plan as discovery fallback --

    def _jurisdiction(self, rsmu_id: int, plan: DeploymentPlan) -> Tuple[float, float]:
        if self.directory is not None and rsmu_id in self.directory.entries:
            return self.directory.entries[rsmu_id].jurisdiction
        return plan.node(rsmu_id).jurisdiction

    def _owner_at(self, station: float, plan: DeploymentPlan) -> int:
        cw = self.route.carriageway
        if self.directory is not None:
            found = self.directory.owner_of(cw, station)
            if found is not None:
                return found
        self.directory_misses += 1
        return plan.owner_of(cw, station)

    def _crossed(self, rsmu_id: int, station: float, plan: DeploymentPlan) -> bool:
        return plan.successor(rsmu_id) is not None and station >= self._jurisdiction(rsmu_id, plan)[1]

    def step(self, status: VehicleStatus, plan: DeploymentPlan, params: ProtocolParams,
             network: RoadNetwork, now: float) -> List[Message]:
        """Advance the link state machine for one tick; ``now`` is true time."""
        self.status = status
        station = status.position.station
        dev = status.timestamp
        report_due = now >= self.next_report
        out: List[Message] = []

        if not isinstance(self.link, Unlinked) and 0 < params.link_timeout_ms < dev - self.last_heard:
            self.link = UNLINKED
            self.pending = None
            self.link_timeouts += 1

        if isinstance(self.link, Unlinked):
            if self.pending is None or report_due:
                target = self._owner_at(station, plan)
                node = plan.node(target)
                if radio_distance(status.position, node.position, network) <= node.comm_range:
                    out.append(LinkRequest(self.addr, rsmu_addr(target), dev, status, self.intent, "exclusive"))
                    self.pending = target
                    self.next_report = now + params.report_period_ms
            return out

        # at most a couple of transitions per tick; the bound guards against a bad plan
        handed_over = False
        for _ in range(4):
            link = self.link
            if isinstance(link, Single):
                i = link.rsmu
                if self._crossed(i, station, plan):
                    j = plan.successor(i)
                    out.append(LinkRelease(self.addr, rsmu_addr(i), dev, j))
                    self.link = Single(j)
                    self.last_heard = dev
                    handed_over = True
                    continue
                j = plan.successor(i)
                if j is not None and self._jurisdiction(i, plan)[1] - station <= params.d_dual:
                    self.link = Dual(i, j)
                    self.next_accepted = False
                    out.append(LinkRequest(self.addr, rsmu_addr(j), dev, status, self.intent, "dual"))
                    break
            elif isinstance(link, Dual):
                if self._crossed(link.current, station, plan):
                    out.append(LinkRelease(self.addr, rsmu_addr(link.current), dev, link.next))
                    self.link = Single(link.next)
                    self.last_heard = dev
                    handed_over = True
                    continue
                if not self.next_accepted and report_due:
                    out.append(LinkRequest(self.addr, rsmu_addr(link.next), dev, status, self.intent, "dual"))
            break

        owner = ownership(self)
        start, end = self._jurisdiction(owner, plan)
        self.progress = min(max(station - start, 0.0), end - start)

        if report_due or handed_over:
            out.append(StatusUpdate(self.addr, rsmu_addr(owner), dev, status, self.intent))
            self.next_report = now + params.report_period_ms
        return out

    def receive(self, msg: Message, device_now: float) -> None:
        sender = addr_id(msg.sender) if msg.sender.startswith("R") else None
        if sender is not None and sender == self.owner:
            self.last_heard = max(self.last_heard, device_now)
        if isinstance(msg, LinkAccept):
            if isinstance(self.link, Unlinked) and self.pending == sender:
                self.link = Single(sender)
                self.pending = None
                self.last_heard = device_now
            elif isinstance(self.link, Dual) and self.link.next == sender:
                self.next_accepted = True
        elif isinstance(msg, ViewBroadcast):
            if sender == self.owner:
                self.last_view = (msg.view, device_now)
        elif isinstance(msg, EventNotice):
            cur = self.known_events.get(msg.event.id)
            if cur is None or (msg.event.cleared is not None and cur.cleared is None):
                self.known_events[msg.event.id] = msg.event
        elif isinstance(msg, RegistrySnapshot):
            self.directory = msg.directory

    def depart(self, device_now: float) -> List[Message]:
        """Leave the network: release every link still held."""
        out: List[Message] = []
        if isinstance(self.link, Single):
            out.append(LinkRelease(self.addr, rsmu_addr(self.link.rsmu), device_now, None))
        elif isinstance(self.link, Dual):
            out.append(LinkRelease(self.addr, rsmu_addr(self.link.current), device_now, None))
            out.append(LinkRelease(self.addr, rsmu_addr(self.link.next), device_now, None))
        self.link = UNLINKED
        self.pending = None
        return out


@dataclass
class PerceivedVehicle:
    vehicle_id: int
    station: float
    speed: float
    distance: Optional[float]
    source: str  # "sensed" | "shared-only"


def viu_perceive(viu: Viu, ground_truth: Dict[int, VehicleStatus], radius: float,
                 network: RoadNetwork) -> List[PerceivedVehicle]:
    """Vehicles within ``radius`` plus anything only known from the shared view."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    me = viu.status.position
    out = []
    sensed = set()
    for vid in sorted(ground_truth):
        if vid == viu.vehicle_id:
            continue
        st = ground_truth[vid]
        d = radio_distance(me, st.position, network)
        if d <= radius:
            sensed.add(vid)
            out.append(PerceivedVehicle(vid, st.position.station, st.speed, d, "sensed"))
    if viu.last_view is not None:
        view = viu.last_view[0]
        for vid in sorted(view.vehicles):
            if vid == viu.vehicle_id or vid in sensed:
                continue
            snap = view.vehicles[vid]
            out.append(PerceivedVehicle(vid, snap.status.position.station, snap.status.speed, None, "shared-only"))
    return out


@dataclass
class TableEntry:
    status: VehicleStatus
    intent: DrivingIntent
    timestamp: float
    phase: str
    last_contact: float


@dataclass
class Rsmu:
    spec: RsmuSpec
    road_length: float
    clock: ClockState
    params: ProtocolParams = field(default_factory=ProtocolParams)
    table: Dict[int, TableEntry] = field(default_factory=dict)
    view: GlobalView = None
    dirty: Set[int] = field(default_factory=set)
    sync_count: int = 0
    self_heals: int = 0
    evictions: int = 0

    def __post_init__(self):
        if self.view is None:
            self.view = GlobalView(self.spec.id)

    @property
    def id(self) -> int:
        return self.spec.id

    @property
    def addr(self) -> str:
        return rsmu_addr(self.spec.id)

    def owned(self) -> List[int]:
        return sorted(v for v, e in self.table.items() if e.phase == OWNED)

    def install_infra(self, records) -> None:
        for rec in records:
            self.view = upsert_infra(self.view, replace(rec, source=self.id))

    # -- helpers --

    def _absorb(self, vid: int, status: VehicleStatus, intent: DrivingIntent, now: float, phase: str) -> bool:
        """Upsert a table row; returns True when the vehicle just became owned here."""
        entry = self.table.get(vid)
        newly_owned = phase == OWNED and (entry is None or entry.phase != OWNED)
        if entry is None:
            self.table[vid] = TableEntry(status, intent, status.timestamp, phase, now)
        else:
            if status.timestamp > entry.timestamp:
                entry.status, entry.intent, entry.timestamp = status, intent, status.timestamp
            if phase == OWNED:
                entry.phase = OWNED
            entry.last_contact = now
        return newly_owned

    def _record(self, vid: int, status: VehicleStatus, intent: DrivingIntent) -> None:
        before = self.view.vehicles.get(vid)
        self.view = upsert_snapshot(self.view, VehicleSnapshot(vid, status, intent, self.id, status.timestamp))
        if self.view.vehicles.get(vid) is not before:
            self.dirty.add(vid)

    def _claim(self, vid: int, now: float) -> List[Message]:
        return [OwnershipClaim(self.addr, rsmu_addr(n), now, vid) for n in self.spec.neighbors]

    # -- message handling --

    def handle(self, msg: Message, now: float) -> List[Message]:
        out: List[Message] = []
        if isinstance(msg, (LinkRequest, StatusUpdate)):
            vid = addr_id(msg.sender)
            known = vid in self.table
            if isinstance(msg, LinkRequest):
                phase = OWNED if msg.mode == "exclusive" else PRE_ADMITTED
                if self._absorb(vid, msg.status, msg.intent, now, phase):
                    out.extend(self._claim(vid, now))
                out.append(LinkAccept(self.addr, msg.sender, now, "request"))
            else:
                if self._absorb(vid, msg.status, msg.intent, now, OWNED):
                    out.extend(self._claim(vid, now))
                if not known:
                    # the VIU believes it is linked here but we lost track: re-admit
                    self.self_heals += 1
                    out.append(LinkAccept(self.addr, msg.sender, now, "self_heal"))
            self._record(vid, msg.status, msg.intent)
        elif isinstance(msg, LinkRelease):
            vid = addr_id(msg.sender)
            entry = self.table.pop(vid, None)
            if entry is not None and entry.phase == OWNED and msg.next_rsmu is not None:
                snap = VehicleSnapshot(vid, entry.status, entry.intent, self.id, entry.timestamp)
                out.append(OwnershipTransfer(self.addr, rsmu_addr(msg.next_rsmu), now, snap))
        elif isinstance(msg, OwnershipTransfer):
            snap = msg.snapshot
            if self._absorb(snap.vehicle_id, snap.status, snap.intent, now, OWNED):
                out.extend(self._claim(snap.vehicle_id, now))
            self.view = upsert_snapshot(self.view, snap)
        elif isinstance(msg, OwnershipClaim):
            self.table.pop(msg.vehicle_id, None)
        elif isinstance(msg, NeighborSync):
            self.view = merge(self.view, msg.delta)
        elif isinstance(msg, EventNotice):
            self.view = upsert_event(self.view, msg.event)
        return out

    # -- periodic work --

    def detect(self, ground_truth, now_true: float, device_now: float) -> List[AbnormalEvent]:
        found = detect_event(self, ground_truth, now_true, self.params.detection_delay_ms, device_now)
        for ev in found:
            self.view = upsert_event(self.view, ev)
        return found

    def impair_infra(self, event: AbnormalEvent, device_now: float) -> List[InfraRecord]:
        """Mark infrastructure spanning an event location as impaired."""
        changed = []
        loc = event.location
        for rec in list(self.view.infra.values()):
            if rec.carriageway == loc.carriageway and rec.start <= loc.station <= rec.end \
                    and rec.condition != "impaired":
                new = replace(rec, condition="impaired", timestamp=device_now, source=self.id)
                self.view = upsert_infra(self.view, new)
                changed.append(new)
        return changed

    def clear_event(self, event_id: str, device_now: float) -> Optional[AbnormalEvent]:
        ev = self.view.events.get(event_id)
        if ev is None or ev.detector != self.id or ev.cleared is not None:
            return None
        ev = replace(ev, cleared=device_now)
        self.view = upsert_event(self.view, ev)
        return ev

    def announce(self, event: AbnormalEvent, now: float) -> List[Message]:
        """One-off notice (e.g. a clearance) to linked vehicles and neighbors."""
        out: List[Message] = [EventNotice(self.addr, viu_addr(v), now, event) for v in sorted(self.table)]
        out.extend(EventNotice(self.addr, rsmu_addr(n), now, event) for n in self.spec.neighbors)
        return out

    def evict_stale(self, now: float) -> List[int]:
        gone = []
        for vid, e in list(self.table.items()):
            limit = self.params.evict_after_ms if e.phase == OWNED else self.params.preadmit_evict_after_ms
            if now - e.last_contact > limit:
                del self.table[vid]
                gone.append(vid)
        self.evictions += len(gone)
        return gone

    def tick(self, now: float, sync: bool) -> List[Message]:
        """Prune, then broadcast the view and events; sync neighbors when due."""
        self.view = replace(prune(self.view, now, self.params.view_ttl_ms), timestamp=now)
        self.dirty &= set(self.view.vehicles)
        out: List[Message] = []
        targets = sorted(self.table)
        for vid in targets:
            out.append(ViewBroadcast(self.addr, viu_addr(vid), now, self.view))
        active = [self.view.events[k] for k in sorted(self.view.events) if self.view.events[k].active]
        for ev in active:
            for vid in targets:
                out.append(EventNotice(self.addr, viu_addr(vid), now, ev))
            if ev.detector == self.id:
                for n in self.spec.neighbors:
                    out.append(EventNotice(self.addr, rsmu_addr(n), now, ev))
        if sync:
            out.extend(self._sync(now))
        return out

    def _sync(self, now: float) -> List[Message]:
        self.sync_count += 1
        full = self.params.full_sync_every > 0 and self.sync_count % self.params.full_sync_every == 0
        own = {v: s for v, s in self.view.vehicles.items() if s.source == self.id}
        if full:
            vehicles = own
            infra = {k: r for k, r in self.view.infra.items() if r.source == self.id}
        else:
            vehicles = {v: own[v] for v in self.dirty if v in own}
            infra = {}
        self.dirty = set()
        delta = GlobalView(self.id, vehicles, infra, {}, now)
        return [NeighborSync(self.addr, rsmu_addr(n), now, delta, full) for n in self.spec.neighbors]


# function-style aliases for the step operations
def viu_step(viu: Viu, status: VehicleStatus, plan: DeploymentPlan, params: ProtocolParams,
             network: RoadNetwork, now: float) -> List[Message]:
    return viu.step(status, plan, params, network, now)


def rsmu_handle(rsmu: Rsmu, msg: Message, now: float) -> List[Message]:
    return rsmu.handle(msg, now)


def rsmu_tick(rsmu: Rsmu, now: float, sync: bool = True) -> List[Message]:
    return rsmu.tick(now, sync)


__all__ = [
    "OWNED", "PRE_ADMITTED", "Unlinked", "Single", "Dual", "UNLINKED", "LinkMode", "ProtocolParams",
    "ProtocolError", "ownership", "Viu", "Rsmu", "TableEntry", "PerceivedVehicle", "viu_perceive",
    "viu_step", "rsmu_handle", "rsmu_tick", "in_jurisdiction",
]
