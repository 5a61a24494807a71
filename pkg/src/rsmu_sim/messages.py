"""Wire vocabulary exchanged between VIUs, RSMUs and the cloud registry."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .globalview import Directory, GlobalView
from .records import (AbnormalEvent, DrivingIntent, VehicleSnapshot, VehicleStatus, event_to_dict,
                      infra_to_dict, intent_to_dict, snapshot_to_dict, status_to_dict)

CLOUD = "CLOUD"


def rsmu_addr(rsmu_id: int) -> str:
    return f"R{rsmu_id}"


def viu_addr(vehicle_id: int) -> str:
    return f"V{vehicle_id}"


def addr_id(addr: str) -> int:
    return int(addr[1:])


def is_rsmu(addr: str) -> bool:
    return addr.startswith("R")


@dataclass(frozen=True)
class Message:
    sender: str
    receiver: str
    device_ts: float

    # radio link unless overridden; RSMU-to-RSMU traffic rides the wired backhaul
    channel = "v2i"

    @property
    def kind(self) -> str:
        return type(self).__name__

    def payload(self) -> dict:
        return {}


@dataclass(frozen=True)
class StatusUpdate(Message):
    status: VehicleStatus
    intent: DrivingIntent

    def payload(self):
        return {"status": status_to_dict(self.status), "intent": intent_to_dict(self.intent)}


@dataclass(frozen=True)
class LinkRequest(Message):
    status: VehicleStatus
    intent: DrivingIntent
    mode: str = "exclusive"  # or "dual"

    def payload(self):
        return {"status": status_to_dict(self.status), "intent": intent_to_dict(self.intent), "mode": self.mode}


@dataclass(frozen=True)
class LinkAccept(Message):
    reason: str = "request"  # or "self_heal"

    def payload(self):
        return {"reason": self.reason}


@dataclass(frozen=True)
class LinkRelease(Message):
    next_rsmu: Optional[int] = None

    def payload(self):
        return {"next": self.next_rsmu}


@dataclass(frozen=True)
class ViewBroadcast(Message):
    view: GlobalView

    def payload(self):
        # the view itself is reconstructed offline from the updates that built it
        return {"vehicles": len(self.view.vehicles), "events": sorted(self.view.events)}


@dataclass(frozen=True)
class NeighborSync(Message):
    delta: GlobalView
    full: bool = False
    channel = "backhaul"

    def payload(self):
        return {
            "full": self.full,
            "vehicles": [snapshot_to_dict(self.delta.vehicles[v]) for v in sorted(self.delta.vehicles)],
            "infra": [infra_to_dict(self.delta.infra[k]) for k in sorted(self.delta.infra)],
        }


@dataclass(frozen=True)
class EventNotice(Message):
    event: AbnormalEvent

    @property
    def channel(self):
        return "backhaul" if is_rsmu(self.receiver) else "v2i"

    def payload(self):
        return {"event": event_to_dict(self.event)}


@dataclass(frozen=True)
class RegistrySnapshot(Message):
    directory: Directory
    channel = "cloud"

    def payload(self):
        return {"version": self.directory.version, "entries": sorted(self.directory.entries)}


@dataclass(frozen=True)
class OwnershipTransfer(Message):
    """Hands a released vehicle's record to the next RSMU."""

    snapshot: VehicleSnapshot
    channel = "backhaul"

    def payload(self):
        return {"vehicle": self.snapshot.vehicle_id, "snapshot": snapshot_to_dict(self.snapshot)}


@dataclass(frozen=True)
class OwnershipClaim(Message):
    """Tells neighbors to drop a vehicle this RSMU now owns."""

    vehicle_id: int
    channel = "backhaul"

    def payload(self):
        return {"vehicle": self.vehicle_id}
