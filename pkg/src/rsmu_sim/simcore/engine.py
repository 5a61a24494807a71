"""Fixed-tick discrete-event engine.

Each tick at true time ``T`` runs these phases in order:

0. kinematics: spawn due vehicles, move everyone, release links on arrival
1. VIU protocol steps (vehicle id order)
2. deliver every transmission due by ``T``; RSMU replies go out immediately
3. RSMU periodic work on broadcast ticks (RSMU id order)
4. time-signal corrections on the signal period (RSMUs, then vehicles)
5. invariant checks and the optional per-tick trace

All randomness comes from one ``random.Random(seed)``.  Draw order: RSMU
clocks at start-up, then during the run the clock of each spawning vehicle,
channel draws (two per radio transmission) and time-signal draws, in the
phase order above.
"""
from __future__ import annotations

import heapq
import logging
import math
import random
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional, Tuple

from ..channel import TechProfile, Transmission, preset, sample_delivery
from ..deployment import DeploymentPlan, plan_deployment, validate_coverage
from ..globalview import CloudRegistry, registry_prefetch, registry_publish, staleness
from ..messages import CLOUD, Message, RegistrySnapshot, addr_id, is_rsmu, viu_addr
from ..protocol import OWNED, ProtocolParams, Rsmu, Unlinked, Viu, ownership
from ..records import (AbnormalEvent, DrivingIntent, InfraRecord, VehicleStatus, event_to_dict,
                       infra_to_dict, snapshot_to_dict)
from ..timesync import apply_time_signal, local_time, new_clock
from ..topology import (CARRIAGEWAYS, EAST, RoadNetwork, RoadPosition, Route, TopologyError, _path_bounds,
                        build_network, path_length, position_at, radio_distance, route_station_span,
                        validate_route)
from .config import ScenarioConfig, ScenarioError, parse_scenario
from .kinematics import VehicleKinematics, step_vehicle
from .metrics import canonical, collect_metrics, parse_lines

log = logging.getLogger(__name__)

LOG_SCHEMA = 1


class CoverageError(RuntimeError):
    """The deployment plan fails the coverage check and the run was not forced."""

    def __init__(self, report):
        self.report = report
        super().__init__(f"deployment coverage invalid: {report.uncovered_count} uncovered stations, "
                         f"{len(report.spacing_violations)} spacing violations")


@dataclass
class _Vehicle:
    vid: int
    route: Route
    kin: VehicleKinematics
    entry_ms: float
    viu: Optional[Viu] = None
    u: float = 0.0
    total: float = 0.0
    speed: float = 0.0
    accel: float = 0.0
    braking: bool = False
    position: Optional[RoadPosition] = None
    status: Optional[VehicleStatus] = None
    active: bool = False
    done: bool = False


@dataclass
class SimulationResult:
    report: dict
    log_lines: List[str]
    records: List[dict]
    trace: List[dict]
    violations: List[dict]
    event_safety: Dict[str, Dict[int, dict]]
    plan: DeploymentPlan
    rsmus: Dict[int, Rsmu]
    vehicles: Dict[int, Any]


def _params(cfg: ScenarioConfig) -> ProtocolParams:
    p = cfg.protocol
    return ProtocolParams(
        report_period_ms=p.report_period_ms, broadcast_period_ms=p.broadcast_period_ms,
        sync_period_ms=p.sync_period_ms, d_dual=p.d_dual, full_sync_every=p.full_sync_every,
        view_ttl_ms=p.view_ttl_ms, evict_after_ms=p.evict_after_ms,
        preadmit_evict_after_ms=p.preadmit_evict_after_ms, perception_radius=p.perception_radius,
        detection_delay_ms=p.detection_delay_ms, link_timeout_ms=p.link_timeout_ms,
    )


def build_profile(cfg: ScenarioConfig, profile: Optional[str] = None) -> TechProfile:
    prof = preset(profile or cfg.channel.profile).with_overrides(cfg.channel.overrides)
    if cfg.channel.lossless:
        prof = replace(prof, lossless=True)
    return prof


def build_plan(cfg: ScenarioConfig, network: RoadNetwork) -> DeploymentPlan:
    d = cfg.deployment
    plan = plan_deployment(network, d.spacing, d.stations, d.include_ramps, height=d.height,
                           comm_range=d.comm_range, effective_range=d.effective_range)
    plan.report = validate_coverage(plan, network, max_spacing=d.spacing)
    return plan


class Simulation:
    """One scenario run.  Construct, optionally ``inject_event``, then ``run``."""

    def __init__(self, config, *, seed: Optional[int] = None, profile: Optional[str] = None,
                 tick_trace: bool = False, allow_invalid: Optional[bool] = None):
        cfg = parse_scenario(config)
        self.cfg = cfg
        self.seed = cfg.seed if seed is None else int(seed)
        self.rng = random.Random(self.seed)
        self.tick = float(cfg.tick_ms)
        self.n_ticks = int(round(cfg.duration_s * 1000.0 / self.tick))
        self.duration_ms = self.n_ticks * self.tick
        self.tick_trace = tick_trace
        self._started = False
        try:
            self.network = build_network(cfg.geometry.model_dump())
        except TopologyError as exc:
            raise ScenarioError([f"geometry: {exc}"]) from None
        self.plan = build_plan(cfg, self.network)
        forced = cfg.deployment.allow_invalid if allow_invalid is None else allow_invalid
        if not self.plan.report.valid and not forced:
            raise CoverageError(self.plan.report)
        self.profile = build_profile(cfg, profile)
        self.params = _params(cfg)
        self.road_length = self.network.mainline_length

        registry = CloudRegistry()
        for spec in sorted(self.plan.nodes, key=lambda n: n.id):
            registry = registry_publish(registry, spec)
        self.registry = registry

        ts = cfg.timesync
        self.rsmus: Dict[int, Rsmu] = {}
        for spec in sorted(self.plan.nodes, key=lambda n: n.id):
            clock = new_clock(self.rng, 0.0, ts.residual_bound_ms, ts.max_drift_ppm)
            self.rsmus[spec.id] = Rsmu(spec, self.road_length, clock, self.params)
        for rec in cfg.infrastructure:
            for r in self.rsmus.values():
                a, b = r.spec.jurisdiction
                if r.spec.carriageway == rec.carriageway and rec.start <= b and a <= rec.end:
                    r.install_infra([InfraRecord(rec.id, rec.kind, rec.carriageway, rec.start, rec.end)])

        self.vehicles: Dict[int, _Vehicle] = {}
        self._build_fleet()
        self.events: List[Tuple[AbnormalEvent, Optional[float]]] = []
        for ev in cfg.events:
            self.inject_event(
                AbnormalEvent(ev.id, ev.kind, RoadPosition(ev.carriageway, ev.station), ev.onset_s * 1000.0),
                None if ev.cleared_s is None else ev.cleared_s * 1000.0)

        self.lines: List[str] = []
        self.trace: List[dict] = []
        self.violations: List[dict] = []
        self.event_safety: Dict[str, Dict[int, dict]] = {}
        self._heap: List[tuple] = []
        self._density: Dict[int, float] = {}

    # -- setup --

    def _build_fleet(self) -> None:
        cfg = self.cfg
        k = cfg.kinematics
        specs = []
        for i, v in enumerate(cfg.vehicles):
            specs.append((v.entry_time_s, 0, i, Route(v.carriageway, v.entry, v.exit), v.desired_speed))
        if cfg.fleet is not None:
            f = cfg.fleet
            for i in range(f.count):
                r = f.routes[i % len(f.routes)]
                cw = f.carriageways[i % len(f.carriageways)]
                specs.append((f.start_s + i * f.interval_s, 1, i, Route(cw, r.entry, r.exit),
                              f.speeds[i % len(f.speeds)]))
        specs.sort(key=lambda s: (s[0], s[1], s[2]))
        errors = []
        for vid, (entry_s, _, _, route, speed) in enumerate(specs, start=1):
            try:
                validate_route(route, self.network)
            except TopologyError as exc:
                errors.append(f"vehicle {vid}: {exc}")
                continue
            kin = VehicleKinematics(speed, k.max_accel, k.max_decel, k.comfort_decel, k.headway_s, k.standstill_gap)
            self.vehicles[vid] = _Vehicle(vid, route, kin, entry_s * 1000.0, total=path_length(route, self.network))
        if errors:
            raise ScenarioError(errors)

    def inject_event(self, event: AbnormalEvent, cleared_at: Optional[float] = None) -> "Simulation":
        """Register a ground-truth event that appears at ``event.onset`` (true ms)."""
        if self._started:
            raise RuntimeError("events must be injected before the run starts")
        loc = event.location
        if loc.carriageway not in CARRIAGEWAYS or not 0.0 <= loc.station <= self.road_length:
            raise ValueError(f"event {event.id!r}: location off-network")
        if not 0.0 <= event.onset <= self.duration_ms:
            raise ValueError(f"event {event.id!r}: onset outside the run")
        if any(e.id == event.id for e, _ in self.events):
            raise ValueError(f"duplicate event id {event.id!r}")
        ev = AbnormalEvent(event.id, event.kind, RoadPosition(loc.carriageway, loc.station), event.onset)
        self.events.append((ev, cleared_at))
        return self

    # -- logging --

    def _emit(self, record: dict) -> None:
        record["seq"] = len(self.lines)
        self.lines.append(canonical(record))

    def _ceil_tick(self, t: float) -> float:
        return math.ceil(t / self.tick - 1e-9) * self.tick

    def _send(self, msg: Message, T: float, phase: int) -> None:
        recv = msg.receiver
        if not is_rsmu(recv):
            veh = self.vehicles.get(addr_id(recv))
            if veh is None or not veh.active:
                return
        channel = msg.channel
        if channel == "v2i":
            if is_rsmu(msg.sender):
                node, veh = self.rsmus[addr_id(msg.sender)].spec, self.vehicles[addr_id(recv)]
            else:
                node, veh = self.rsmus[addr_id(recv)].spec, self.vehicles[addr_id(msg.sender)]
            dist = radio_distance(veh.position, node.position, self.network)
            density = self._density.get(node.id, 0.0)
            ok, arrival = sample_delivery(self.profile, Transmission(msg.sender, recv, dist, density, None, T),
                                          self.rng)
            if ok:
                arrival = round(arrival, 3)
                t_deliver = max(self._ceil_tick(arrival), T + self.tick)
        else:
            a, b = self.rsmus[addr_id(msg.sender)].spec, self.rsmus[addr_id(recv)].spec
            dist = radio_distance(a.position, b.position, self.network)
            density = None
            ok, arrival = True, T
            t_deliver = T if phase <= 2 else T + self.tick
        rec = {
            "type": "tx", "kind": msg.kind, "sender": msg.sender, "receiver": recv, "channel": channel,
            "t_send": T, "device_ts": msg.device_ts, "distance": round(dist, 3), "density": density,
            "verdict": "delivered" if ok else "dropped",
            "t_arrival": arrival if ok else None, "t_deliver": t_deliver if ok else None,
            "payload": msg.payload(),
        }
        self._emit(rec)
        if ok:
            heapq.heappush(self._heap, (t_deliver, arrival, rec["seq"], msg))

    # -- phases --

    def _compute_density(self) -> None:
        counts = {i: 0 for i in self.rsmus}
        for v in self.vehicles.values():
            if v.active:
                counts[self.plan.owner_of(v.route.carriageway, v.position.station)] += 1
        self._density = {i: counts[i] / (self.rsmus[i].spec.jurisdiction_length / 1000.0) for i in self.rsmus}

    def _make_status(self, v: _Vehicle, T: float) -> VehicleStatus:
        heading = 0.0 if v.route.carriageway == EAST else 180.0
        return VehicleStatus(v.position, v.speed, heading, v.accel, v.braking, 0.0,
                             local_time(v.viu.clock, T))

    def _spawn(self, v: _Vehicle, T: float) -> None:
        ts = self.cfg.timesync
        clock = new_clock(self.rng, T, ts.residual_bound_ms, ts.max_drift_ppm)
        intent = DrivingIntent(v.kin.desired_speed, "exit-at" if v.route.exit else "keep-lane", v.route.exit)
        v.viu = Viu(v.vid, v.route, clock, intent)
        v.u, v.speed, v.accel, v.braking = 0.0, v.kin.desired_speed, 0.0, False
        v.position = position_at(0.0, v.route, self.network)
        v.active = True
        lo, hi = route_station_span(v.route, self.network)
        cw = v.route.carriageway
        on_route = [i for i in self.plan.order[cw]
                    if self.plan.node(i).jurisdiction[0] <= hi and lo <= self.plan.node(i).jurisdiction[1]]
        directory = registry_prefetch(self.registry, on_route)
        msg = RegistrySnapshot(CLOUD, viu_addr(v.vid), T, directory)
        self._emit({
            "type": "tx", "kind": msg.kind, "sender": CLOUD, "receiver": msg.receiver, "channel": "cloud",
            "t_send": T, "device_ts": T, "distance": None, "density": None, "verdict": "delivered",
            "t_arrival": T, "t_deliver": T, "payload": msg.payload(),
        })
        v.viu.receive(msg, local_time(clock, T))

    @staticmethod
    def _lane(pos: RoadPosition) -> Tuple[tuple, float]:
        if pos.on_ramp is not None:
            return ("ramp", pos.on_ramp[0]), pos.on_ramp[1]
        return ("main", pos.carriageway), pos.station

    def _event_coordinate(self, v: _Vehicle, ev: AbnormalEvent) -> Optional[float]:
        if ev.location.carriageway != v.route.carriageway:
            return None
        r_in, s0, s1, _ = _path_bounds(v.route, self.network)
        if not s0 <= ev.location.station <= s1:
            return None
        return r_in + ev.location.station - s0

    def _obstacle(self, v: _Vehicle, ev: AbnormalEvent, cleared_at: Optional[float], T: float) -> bool:
        truth = ev.onset <= T and (cleared_at is None or T < cleared_at)
        d = radio_distance(v.position, ev.location, self.network)
        if d <= self.params.perception_radius:
            return truth
        known = v.viu.known_events.get(ev.id)
        return known is not None and known.cleared is None

    def _kinematics(self, T: float) -> None:
        dt = self.tick / 1000.0
        movers = [v for v in self.vehicles.values() if v.active]
        lanes = {v.vid: self._lane(v.position) for v in movers}
        radius = self.params.perception_radius
        plans = []
        for v in movers:
            key, x = lanes[v.vid]
            best: Optional[Tuple[float, float]] = None
            for o in movers:
                if o.vid == v.vid:
                    continue
                okey, ox = lanes[o.vid]
                if okey != key or ox < x or (ox == x and o.vid > v.vid):
                    continue
                if radio_distance(v.position, o.position, self.network) > radius:
                    continue
                if best is None or ox - x < best[0]:
                    best = (ox - x, o.speed)
            for ev, cleared_at in self.events:
                eu = self._event_coordinate(v, ev)
                if eu is None or eu < v.u or not self._obstacle(v, ev, cleared_at, T):
                    continue
                if best is None or eu - v.u < best[0]:
                    best = (eu - v.u, 0.0)
            plans.append((v, step_vehicle(v.kin, v.speed, best, self.tick / 1000.0)))
        for v, mv in plans:
            old_u, old_speed = v.u, v.speed
            v.speed, v.accel, v.braking = mv.speed, mv.acceleration, mv.braking
            v.u = min(v.total, v.u + mv.distance)
            if v.speed < 0 or v.u - old_u > max(old_speed, v.speed) * dt + 1e-6:
                self.violations.append({"t": T, "kind": "kinematics", "vehicle": v.vid})
            v.position = position_at(v.u, v.route, self.network)
            if v.u >= v.total:
                v.done = True
        for v in movers:
            self._track_events(v, T)

    def _track_events(self, v: _Vehicle, T: float) -> None:
        for ev, cleared_at in self.events:
            if ev.onset > T or (cleared_at is not None and T >= cleared_at):
                continue
            eu = self._event_coordinate(v, ev)
            if eu is None:
                continue
            rec = self.event_safety.setdefault(ev.id, {}).get(v.vid)
            if rec is None:
                if v.u >= eu:
                    continue  # already past the spot when it appeared
                rec = {"informed_at": None, "min_gap": math.inf, "reached": False, "stopped": False}
                self.event_safety[ev.id][v.vid] = rec
            if rec["informed_at"] is None and ev.id in v.viu.known_events:
                rec["informed_at"] = T
            rec["min_gap"] = min(rec["min_gap"], eu - v.u)
            if v.u >= eu:
                rec["reached"] = True
            if v.speed == 0.0 and v.u < eu:
                rec["stopped"] = True

    def _phase0(self, T: float) -> None:
        self._compute_density()
        moving = any(v.active for v in self.vehicles.values())
        if moving:
            self._kinematics(T)
        for vid in sorted(self.vehicles):
            v = self.vehicles[vid]
            if not v.active and not v.done and v.entry_ms <= T:
                self._spawn(v, T)
        for vid in sorted(self.vehicles):
            v = self.vehicles[vid]
            if v.active:
                v.status = self._make_status(v, T)
                if v.done:
                    out = v.viu.depart(v.status.timestamp)
                    for m in out:
                        self._send(m, T, 0)
                    v.active = False

    def _phase1(self, T: float) -> None:
        for vid in sorted(self.vehicles):
            v = self.vehicles[vid]
            if v.active:
                for m in v.viu.step(v.status, self.plan, self.params, self.network, T):
                    self._send(m, T, 1)

    def _phase2(self, T: float) -> None:
        while self._heap and self._heap[0][0] <= T:
            _, _, _, msg = heapq.heappop(self._heap)
            if is_rsmu(msg.receiver):
                r = self.rsmus[addr_id(msg.receiver)]
                for m in r.handle(msg, local_time(r.clock, T)):
                    self._send(m, T, 2)
            else:
                v = self.vehicles[addr_id(msg.receiver)]
                if v.active:
                    v.viu.receive(msg, local_time(v.viu.clock, T))

    def _phase3(self, T: float, n: int) -> None:
        p = self.params
        if n % int(round(p.broadcast_period_ms / self.tick)) != 0:
            return
        sync = n % int(round(p.sync_period_ms / self.tick)) == 0
        live = [ev for ev, cl in self.events if ev.onset <= T and (cl is None or T < cl)]
        for rid in sorted(self.rsmus):
            r = self.rsmus[rid]
            dev = local_time(r.clock, T)
            r.evict_stale(dev)
            for ev in r.detect(live, T, dev):
                changed = r.impair_infra(ev, dev)
                self._emit({"type": "detect", "rsmu": rid, "t": T, "device_ts": dev, "event": event_to_dict(ev),
                            "infra": [infra_to_dict(c) for c in changed]})
            for ev, cl in self.events:
                if cl is not None and T >= cl:
                    done = r.clear_event(ev.id, dev)
                    if done is not None:
                        self._emit({"type": "clear", "rsmu": rid, "t": T, "device_ts": dev,
                                    "event": event_to_dict(done)})
                        for m in r.announce(done, dev):
                            self._send(m, T, 3)
            owned = r.owned()
            ages, _ = staleness(r.view, dev, owned)
            self._emit({"type": "tick", "rsmu": rid, "t": T, "device_ts": dev, "owned": owned,
                        "ages": [[vid, ages[vid]] for vid in sorted(ages)]})
            for m in r.tick(dev, sync):
                self._send(m, T, 3)

    def _phase4(self, T: float) -> None:
        period = self.cfg.timesync.period_s * 1000.0
        if T <= 0 or abs(T / period - round(T / period)) > 1e-9:
            return
        for rid in sorted(self.rsmus):
            r = self.rsmus[rid]
            r.clock = apply_time_signal(r.clock, T, self.rng)
        for vid in sorted(self.vehicles):
            v = self.vehicles[vid]
            if v.active:
                v.viu.clock = apply_time_signal(v.viu.clock, T, self.rng)

    def _phase5(self, T: float) -> None:
        owners: Dict[int, List[int]] = {}
        for rid, r in self.rsmus.items():
            for vid, e in r.table.items():
                if e.phase == OWNED:
                    owners.setdefault(vid, []).append(rid)
        for vid in sorted(self.vehicles):
            v = self.vehicles[vid]
            held = owners.get(vid, [])
            linked = v.active and not isinstance(v.viu.link, Unlinked)
            if (linked and len(held) != 1) or len(held) > 1:
                self.violations.append({"t": T, "kind": "ownership", "vehicle": vid, "owners": sorted(held)})
            if self.tick_trace and v.active:
                link = v.viu.link
                self.trace.append({
                    "t": T, "vehicle": vid, "carriageway": v.position.carriageway,
                    "station": v.position.station, "u": v.u, "speed": v.speed, "accel": v.accel,
                    "braking": v.braking, "link": type(link).__name__.lower(),
                    "owner": None if isinstance(link, Unlinked) else ownership(v.viu),
                    "rsmus": list(vars(link).values()),
                })

    # -- driver --

    def _meta(self) -> dict:
        cfg = self.cfg
        return {
            "type": "meta", "schema": LOG_SCHEMA, "scenario": cfg.name, "seed": self.seed,
            "profile": self.profile.to_dict(), "tick": self.tick, "duration": self.duration_ms,
            "params": {k: getattr(self.params, k) for k in self.params.__dataclass_fields__},
            "events": [{"id": ev.id, "kind": ev.kind, "carriageway": ev.location.carriageway,
                        "station": ev.location.station, "onset": ev.onset, "cleared": cl}
                       for ev, cl in self.events],
            "rsmus": [self.plan.node(i).to_dict() for i in sorted(self.rsmus)],
        }

    def run(self) -> SimulationResult:
        if self._started:
            raise RuntimeError("a Simulation runs once")
        self._started = True
        self._emit(self._meta())
        for rid in sorted(self.rsmus):
            r = self.rsmus[rid]
            self._emit({"type": "init", "rsmu": rid,
                        "infra": [infra_to_dict(r.view.infra[k]) for k in sorted(r.view.infra)]})
        for n in range(self.n_ticks):
            T = n * self.tick
            self._phase0(T)
            self._phase1(T)
            self._phase2(T)
            self._phase3(T, n)
            self._phase4(T)
            self._phase5(T)
        for rid in sorted(self.rsmus):
            view = self.rsmus[rid].view
            self._emit({"type": "final", "rsmu": rid, "view": {
                "vehicles": [snapshot_to_dict(view.vehicles[k]) for k in sorted(view.vehicles)],
                "infra": [infra_to_dict(view.infra[k]) for k in sorted(view.infra)],
                "events": [event_to_dict(view.events[k]) for k in sorted(view.events)],
            }})
        self._emit({"type": "end", "t_end": self.duration_ms, "records": len(self.lines) + 1})
        records = parse_lines(self.lines)
        report = collect_metrics(records)
        if self.violations:
            log.warning("%d invariant violations", len(self.violations))
        return SimulationResult(report, list(self.lines), records, self.trace, self.violations,
                                self.event_safety, self.plan, self.rsmus, self.vehicles)


def run(config, **kw) -> SimulationResult:
    return Simulation(config, **kw).run()


def inject_event(sim: Simulation, event: AbnormalEvent, cleared_at: Optional[float] = None) -> Simulation:
    return sim.inject_event(event, cleared_at)
