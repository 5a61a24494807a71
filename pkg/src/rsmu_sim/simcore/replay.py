"""Brute-force view reconstruction from a message log.

Works on plain dicts only and shares no code with the live view store, so a
match between the two is real evidence.  Every update an RSMU could have
applied is replayed in delivery order; the latest device timestamp wins and
ties go to the smaller source id.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

_UPLINK = ("StatusUpdate", "LinkRequest")


def _key(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True)


def _newer(cand: dict, cur: dict) -> bool:
    if cand["timestamp"] != cur["timestamp"]:
        return cand["timestamp"] > cur["timestamp"]
    if cand["source"] != cur["source"]:
        return cand["source"] < cur["source"]
    return _key(cand) < _key(cur)


def _event_score(ev: dict) -> tuple:
    det = ev.get("detected")
    return (ev.get("cleared") is not None, det is not None, -(det if det is not None else 0.0))


def _event_newer(cand: dict, cur: dict) -> bool:
    a, b = _event_score(cand), _event_score(cur)
    return a > b if a != b else _key(cand) < _key(cur)


@dataclass
class _View:
    vehicles: Dict[int, dict] = field(default_factory=dict)
    infra: Dict[str, dict] = field(default_factory=dict)
    events: Dict[str, dict] = field(default_factory=dict)

    def put_vehicle(self, snap: dict) -> None:
        cur = self.vehicles.get(snap["vehicle"])
        if cur is None or _newer(snap, cur):
            self.vehicles[snap["vehicle"]] = snap

    def put_infra(self, rec: dict) -> None:
        cur = self.infra.get(rec["id"])
        if cur is None or _newer(rec, cur):
            self.infra[rec["id"]] = rec

    def put_event(self, ev: dict) -> None:
        cur = self.events.get(ev["id"])
        if cur is None or _event_newer(ev, cur):
            self.events[ev["id"]] = ev

    def export(self) -> dict:
        return {
            "vehicles": [self.vehicles[k] for k in sorted(self.vehicles)],
            "infra": [self.infra[k] for k in sorted(self.infra)],
            "events": [self.events[k] for k in sorted(self.events)],
        }


@dataclass
class OracleResult:
    views: Dict[int, dict]
    final: Dict[int, dict]
    mismatches: List[str]

    @property
    def match(self) -> bool:
        return not self.mismatches


def _order(rec: dict) -> Tuple:
    kind = rec["type"]
    if kind == "init":
        return (float("-inf"), 0, 0.0, rec["seq"])
    if kind == "tx":
        return (rec["t_deliver"], 2, rec["t_arrival"], rec["seq"])
    return (rec["t"], 3, 0.0, rec["seq"])


def replay_views(records: List[dict]) -> OracleResult:
    meta = next((r for r in records if r["type"] == "meta"), None)
    ttl = meta["params"]["view_ttl_ms"] if meta else 0.0
    end = next((r for r in records if r["type"] == "end"), None)
    # anything due at or after the end instant was still in flight when the run stopped
    t_end = end["t_end"] if end else float("inf")
    views: Dict[int, _View] = {}
    if meta:
        for node in meta["rsmus"]:
            views[node["id"]] = _View()
    mismatches: List[str] = []

    steps = [r for r in records if r["type"] in ("init", "detect", "clear", "tick")
             or (r["type"] == "tx" and r["verdict"] == "delivered" and r["receiver"].startswith("R")
                 and r["t_deliver"] < t_end)]
    steps.sort(key=_order)
    for rec in steps:
        kind = rec["type"]
        if kind == "tx":
            view = views.setdefault(int(rec["receiver"][1:]), _View())
            rid = int(rec["receiver"][1:])
            body = rec["payload"]
            if rec["kind"] in _UPLINK:
                status = body["status"]
                view.put_vehicle({"vehicle": int(rec["sender"][1:]), "status": status, "intent": body["intent"],
                                  "source": rid, "timestamp": status["timestamp"]})
            elif rec["kind"] == "OwnershipTransfer":
                view.put_vehicle(body["snapshot"])
            elif rec["kind"] == "NeighborSync":
                for snap in body["vehicles"]:
                    view.put_vehicle(snap)
                for inf in body["infra"]:
                    view.put_infra(inf)
            elif rec["kind"] == "EventNotice":
                view.put_event(body["event"])
            continue
        view = views.setdefault(rec["rsmu"], _View())
        if kind == "init":
            for inf in rec["infra"]:
                view.put_infra(inf)
        elif kind == "detect":
            view.put_event(rec["event"])
            for inf in rec["infra"]:
                view.put_infra(inf)
        elif kind == "clear":
            view.put_event(rec["event"])
        elif kind == "tick":
            now = rec["device_ts"]
            expect = {vid: max(0.0, now - view.vehicles[vid]["timestamp"])
                      for vid in rec["owned"] if vid in view.vehicles}
            logged = {vid: age for vid, age in rec["ages"]}
            if expect != logged:
                mismatches.append(f"RSMU {rec['rsmu']} tick {rec['t']}: staleness ages differ")
            view.vehicles = {vid: s for vid, s in view.vehicles.items() if now - s["timestamp"] <= ttl}

    final = {r["rsmu"]: r["view"] for r in records if r["type"] == "final"}
    exported = {rid: v.export() for rid, v in views.items()}
    for rid in sorted(set(final) | set(exported)):
        got, want = exported.get(rid), final.get(rid)
        if want is None:
            mismatches.append(f"RSMU {rid}: no final view in log")
        elif got != want:
            parts = [k for k in ("vehicles", "infra", "events") if (got or {}).get(k) != want.get(k)]
            mismatches.append(f"RSMU {rid}: oracle view differs in {', '.join(parts)}")
    return OracleResult(exported, final, mismatches)
