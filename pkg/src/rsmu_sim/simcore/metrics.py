"""Run report computed purely from the JSON-lines message log."""
from __future__ import annotations

import csv
import hashlib
import io
import json
from collections import defaultdict
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

import numpy as np

REPORT_SCHEMA = 1
BUCKET_M = 100.0
UPLINK = ("StatusUpdate", "LinkRequest")


class MetricsError(ValueError):
    pass


def canonical(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def parse_lines(lines: Iterable[str]) -> List[dict]:
    out = []
    for n, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MetricsError(f"line {n}: not valid JSON ({exc.msg})") from None
        if not isinstance(rec, dict) or "type" not in rec or "seq" not in rec:
            raise MetricsError(f"line {n}: record lacks 'type' or 'seq'")
        if rec["type"] == "tx":
            missing = {"kind", "sender", "receiver", "channel", "t_send", "verdict"} - set(rec)
            if missing:
                raise MetricsError(f"line {n}: tx record missing {sorted(missing)}")
            if rec["verdict"] not in ("delivered", "dropped"):
                raise MetricsError(f"line {n}: bad verdict {rec['verdict']!r}")
        out.append(rec)
    return out


def read_log(path: Union[str, Path]) -> List[dict]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise MetricsError(f"cannot read {path}: {exc.strerror or exc}") from None
    return parse_lines(text.splitlines())


def write_log(lines: Iterable[str], path: Union[str, Path]) -> None:
    with open(path, "w") as fh:
        for line in lines:
            fh.write(line + "\n")


def run_digest(records: Iterable[dict]) -> str:
    h = hashlib.sha256()
    for rec in records:
        h.update(canonical(rec).encode())
        h.update(b"\n")
    return h.hexdigest()


def _ratio(delivered: int, attempted: int) -> Optional[float]:
    return delivered / attempted if attempted else None


def _vid(addr: str) -> int:
    return int(addr[1:])


def _percentiles(values: List[float]) -> dict:
    if not values:
        return {"p50": None, "p95": None, "max": None, "samples": 0}
    arr = np.asarray(values, dtype=float)
    p50, p95 = np.percentile(arr, [50, 95])
    return {"p50": float(p50), "p95": float(p95), "max": float(arr.max()), "samples": len(values)}


def _conservation(records: List[dict]) -> dict:
    seqs = [r["seq"] for r in records]
    expected = set(range(max(seqs) + 1)) if seqs else set()
    missing = sorted(expected - set(seqs))
    ok = not missing and seqs == sorted(seqs) and len(set(seqs)) == len(seqs)
    if records:
        last = records[-1]
        if last.get("type") != "end" or last.get("records") != len(records):
            ok = False
    tx = [r for r in records if r["type"] == "tx"]
    delivered = sum(r["verdict"] == "delivered" for r in tx)
    dropped = sum(r["verdict"] == "dropped" for r in tx)
    return {"ok": ok, "records": len(records), "missing_seq": missing, "attempted": len(tx),
            "delivered": delivered, "dropped": dropped}


def _handovers(tx: List[dict], t_end: float) -> Dict[int, dict]:
    per: Dict[int, dict] = {}
    by_vehicle: Dict[int, List[dict]] = defaultdict(list)
    for r in tx:
        for addr in (r["sender"], r["receiver"]):
            if addr.startswith("V"):
                by_vehicle[_vid(addr)].append(r)
    for vid in sorted(by_vehicle):
        msgs = by_vehicle[vid]
        me = f"V{vid}"
        gaps, windows = [], []
        prev_release = float("-inf")
        for r in msgs:
            if r["kind"] != "LinkRelease" or r["sender"] != me or r["payload"].get("next") is None:
                continue
            t_rel = r["t_send"]
            nxt = f"R{r['payload']['next']}"
            duals = [m["t_send"] for m in msgs if m["kind"] == "LinkRequest" and m["sender"] == me
                     and m["receiver"] == nxt and m["payload"].get("mode") == "dual"
                     and prev_release <= m["t_send"] <= t_rel]
            if duals:
                windows.append(t_rel - min(duals))
            accepted = any(m["kind"] == "LinkAccept" and m["sender"] == nxt and m["receiver"] == me
                           and m["verdict"] == "delivered" and m["t_deliver"] <= t_rel
                           and (not duals or m["t_send"] >= min(duals)) for m in msgs)
            if accepted:
                gaps.append(0.0)
            else:
                ends = [m["t_deliver"] for m in msgs if m["verdict"] == "delivered" and m["t_send"] >= t_rel and (
                        (m["kind"] == "LinkAccept" and m["sender"] == nxt and m["receiver"] == me)
                        or (m["kind"] in UPLINK and m["sender"] == me and m["receiver"] == nxt))]
                gaps.append((min(ends) if ends else t_end) - t_rel)
            prev_release = t_rel
        per[vid] = {"handovers": len(gaps), "link_gaps_ms": gaps, "dual_windows_ms": windows}
    return per


def _skew(records: List[dict]) -> Tuple[Optional[float], bool]:
    spread: Dict[float, List[float]] = {}
    for r in records:
        if r["type"] == "tx" and r["sender"] != "CLOUD":
            t, dev = r["t_send"], r["device_ts"]
        elif r["type"] == "tick":
            t, dev = r["t"], r["device_ts"]
        else:
            continue
        err = dev - t
        lo_hi = spread.get(t)
        if lo_hi is None:
            spread[t] = [err, err]
        else:
            lo_hi[0] = min(lo_hi[0], err)
            lo_hi[1] = max(lo_hi[1], err)
    skew = max((hi - lo for lo, hi in spread.values()), default=None)

    # per-vehicle status timestamps must strictly increase from one send tick to the next
    last: Dict[str, Tuple[float, float]] = {}
    monotone = True
    for r in records:
        if r["type"] != "tx" or r["kind"] not in UPLINK:
            continue
        ts = r["payload"]["status"]["timestamp"]
        prev = last.get(r["sender"])
        if prev is not None:
            if r["t_send"] > prev[0] and ts <= prev[1]:
                monotone = False
            if r["t_send"] == prev[0] and ts != prev[1]:
                monotone = False
        last[r["sender"]] = (r["t_send"], ts)
    return skew, monotone


def collect_metrics(records: List[dict]) -> dict:
    """Build the run report from parsed log records."""
    meta = next((r for r in records if r["type"] == "meta"), None)
    end = next((r for r in records if r["type"] == "end"), None)
    t_end = end["t_end"] if end else 0.0
    tx = [r for r in records if r["type"] == "tx"]
    profile = meta["profile"]["name"] if meta else None

    # delivery ratio over the radio link
    radio = [r for r in tx if r["channel"] == "v2i"]
    buckets: Dict[int, List[int]] = defaultdict(lambda: [0, 0])
    for r in radio:
        b = int(r["distance"] // BUCKET_M)
        buckets[b][0] += 1
        buckets[b][1] += r["verdict"] == "delivered"
    attempted = len(radio)
    delivered = sum(r["verdict"] == "delivered" for r in radio)
    by_distance = {
        f"{int(b * BUCKET_M)}-{int((b + 1) * BUCKET_M)}": {"attempted": a, "delivered": d, "ratio": _ratio(d, a)}
        for b, (a, d) in sorted(buckets.items())
    }
    delivery = {"attempted": attempted, "delivered": delivered, "ratio": _ratio(delivered, attempted),
                "by_profile": {profile: _ratio(delivered, attempted)} if profile else {},
                "by_distance": by_distance}

    per_vehicle = _handovers(tx, t_end)
    all_gaps = [g for v in per_vehicle.values() for g in v["link_gaps_ms"]]

    ages = [a for r in records if r["type"] == "tick" for _, a in r["ages"]]

    onsets = {e["id"]: e["onset"] for e in meta["events"]} if meta else {}
    propagation: Dict[str, dict] = {}
    for eid, onset in sorted(onsets.items()):
        first: Dict[int, float] = {}
        for r in tx:
            if r["kind"] == "EventNotice" and r["receiver"].startswith("V") and r["verdict"] == "delivered" \
                    and r["payload"]["event"]["id"] == eid and r["payload"]["event"]["cleared"] is None:
                vid = _vid(r["receiver"])
                if vid not in first:
                    first[vid] = r["t_deliver"] - onset
        detect = [r["t"] for r in records if r["type"] == "detect" and r["event"]["id"] == eid]
        propagation[eid] = {
            "onset": onset,
            "detected_at": min(detect) if detect else None,
            "per_vehicle": {str(k): first[k] for k in sorted(first)},
            "max": max(first.values(), default=None),
        }

    skew, monotone = _skew(records)
    kinds: Dict[str, List[int]] = defaultdict(lambda: [0, 0])
    for r in tx:
        kinds[r["kind"]][0] += 1
        kinds[r["kind"]][1] += r["verdict"] == "delivered"

    return {
        "schema": REPORT_SCHEMA,
        "scenario": meta["scenario"] if meta else None,
        "seed": meta["seed"] if meta else None,
        "profile": profile,
        "t_end": t_end,
        "vehicles": {str(k): v for k, v in sorted(per_vehicle.items())},
        "handovers_total": sum(v["handovers"] for v in per_vehicle.values()),
        "max_link_gap_ms": max(all_gaps, default=0.0),
        "delivery": delivery,
        "staleness_ms": _percentiles(ages),
        "event_propagation_ms": propagation,
        "clock": {"skew_max_ms": skew, "timestamps_monotone": monotone},
        "self_heal_admissions": sum(1 for r in tx if r["kind"] == "LinkAccept"
                                    and r["payload"].get("reason") == "self_heal"),
        "neighbor_syncs": kinds["NeighborSync"][0] if "NeighborSync" in kinds else 0,
        "messages": {k: {"attempted": a, "delivered": d} for k, (a, d) in sorted(kinds.items())},
        "conservation": _conservation(records),
        "run_digest": run_digest(records),
    }


# -- report serialization ----------------------------------------------------

def flatten(report: dict, prefix: str = "") -> List[Tuple[str, Any]]:
    rows = []
    for key in sorted(report):
        value = report[key]
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            rows.extend(flatten(value, name + "."))
        elif isinstance(value, list):
            rows.extend(flatten({str(i): v for i, v in enumerate(value)}, name + ".") if value else [(name, [])])
        else:
            rows.append((name, value))
    return rows


def report_to_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def report_to_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "value"])
    for name, value in flatten(report):
        w.writerow([name, json.dumps(value)])
    return buf.getvalue()


def csv_rows(text: str) -> List[Tuple[str, Any]]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["metric", "value"]:
        raise MetricsError("not a report CSV")
    return [(name, json.loads(value)) for name, value in rows[1:]]
