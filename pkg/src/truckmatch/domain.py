"""Core entities (pings, shipments, pingsets) and NDJSON file ingestion.

Ping records are line-delimited JSON with fields truck_id, lat, lon,
ts_utc, tz_offset_min and optional country/state/city. Shipment records
carry shipment_id, carrier_id and the two stops. Malformed ping lines are
skipped and tallied rather than aborting the load.
"""

from __future__ import annotations

import json
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import SchemaError
from .geo import GeoPoint, haversine_km

#: Candidate pingsets are windowed to the appointments padded by this many
#: hours, bounding late departures while keeping the 2-hour correctness
#: rule inside the window with margin.
WINDOW_PAD_HOURS = 6.0


@dataclass(frozen=True, slots=True)
class Ping:
    truck_id: str
    position: GeoPoint
    timestamp: int  # UTC epoch seconds
    tz_offset_minutes: int = 0

    def __post_init__(self):
        if not self.truck_id:
            raise ValueError("truck_id must be non-empty")
        if self.timestamp <= 0:
            raise ValueError("timestamp must be positive")


@dataclass(frozen=True, slots=True)
class Stop:
    location: GeoPoint
    appointment: int  # UTC epoch seconds

    def __post_init__(self):
        if self.appointment <= 0:
            raise ValueError("appointment must be positive")


@dataclass(frozen=True, slots=True)
class Shipment:
    shipment_id: str
    pickup: Stop
    dropoff: Stop
    carrier_id: str = ""

    def __post_init__(self):
        if not self.pickup.appointment < self.dropoff.appointment:
            raise ValueError("pickup appointment must precede dropoff")
        if haversine_km(self.pickup.location, self.dropoff.location) == 0.0:
            raise ValueError("pickup and dropoff coincide")

    def haul_km(self) -> float:
        return haversine_km(self.pickup.location, self.dropoff.location)


@dataclass(frozen=True)
class Pingset:
    truck_id: str
    pings: tuple[Ping, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "pings", tuple(self.pings))
        for p in self.pings:
            if p.truck_id != self.truck_id:
                raise ValueError("all pings must share the pingset's truck_id")
        ts = [p.timestamp for p in self.pings]
        if any(a > b for a, b in zip(ts, ts[1:])):
            raise ValueError("ping timestamps must be non-decreasing")

    def __len__(self) -> int:
        return len(self.pings)

    def latest(self) -> Ping:
        return self.pings[-1]

    def prefix(self, n: int) -> "Pingset":
        return Pingset(self.truck_id, self.pings[:n])


def candidate_window(shipment: Shipment) -> tuple[int, int]:
    """Time window over which a candidate pingset is collected."""
    pad = int(WINDOW_PAD_HOURS * 3600)
    return shipment.pickup.appointment - pad, shipment.dropoff.appointment + pad


_REQUIRED_PING_FIELDS = ("truck_id", "lat", "lon", "ts_utc")


def ping_to_record(p: Ping) -> dict:
    return {
        "truck_id": p.truck_id,
        "lat": p.position.lat,
        "lon": p.position.lon,
        "ts_utc": p.timestamp,
        "tz_offset_min": p.tz_offset_minutes,
    }


def ping_from_record(rec: dict) -> Ping:
    for key in _REQUIRED_PING_FIELDS:
        if key not in rec:
            raise SchemaError(f"ping record missing field {key!r}")
    try:
        return Ping(
            truck_id=str(rec["truck_id"]),
            position=GeoPoint(float(rec["lat"]), float(rec["lon"])),
            timestamp=int(rec["ts_utc"]),
            tz_offset_minutes=int(rec.get("tz_offset_min", 0)),
        )
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"bad ping record: {exc}") from exc


def load_pings(path: str | Path) -> tuple[list[Ping], int]:
    """Read a ping file; returns (pings in file order, skipped line count)."""
    pings: list[Ping] = []
    skipped = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                pings.append(ping_from_record(json.loads(line)))
            except (json.JSONDecodeError, SchemaError):
                skipped += 1
    return pings, skipped


def save_pings(pings: Iterable[Ping], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pings:
            fh.write(json.dumps(ping_to_record(p), sort_keys=True) + "\n")


def shipment_to_record(s: Shipment) -> dict:
    return {
        "shipment_id": s.shipment_id,
        "carrier_id": s.carrier_id,
        "pickup_lat": s.pickup.location.lat,
        "pickup_lon": s.pickup.location.lon,
        "pickup_appt_utc": s.pickup.appointment,
        "drop_lat": s.dropoff.location.lat,
        "drop_lon": s.dropoff.location.lon,
        "drop_appt_utc": s.dropoff.appointment,
    }


def shipment_from_record(rec: dict) -> Shipment:
    try:
        return Shipment(
            shipment_id=str(rec["shipment_id"]),
            carrier_id=str(rec.get("carrier_id", "")),
            pickup=Stop(
                GeoPoint(float(rec["pickup_lat"]), float(rec["pickup_lon"])),
                int(rec["pickup_appt_utc"]),
            ),
            dropoff=Stop(
                GeoPoint(float(rec["drop_lat"]), float(rec["drop_lon"])),
                int(rec["drop_appt_utc"]),
            ),
        )
    except KeyError as exc:
        raise SchemaError(f"shipment record missing field {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"bad shipment record: {exc}") from exc


def load_shipments(path: str | Path) -> list[Shipment]:
    shipments = []
    with open(path, "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                shipments.append(shipment_from_record(json.loads(line)))
            except (json.JSONDecodeError, SchemaError) as exc:
                raise SchemaError(f"{path}:{i}: {exc}") from exc
    return shipments


def save_shipments(shipments: Iterable[Shipment], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in shipments:
            fh.write(json.dumps(shipment_to_record(s), sort_keys=True) + "\n")


class FleetIndex:
    """Pings grouped by truck and sorted by time, for fast windowing."""

    def __init__(self, pings: Iterable[Ping]):
        by_truck: dict[str, list[Ping]] = {}
        for p in pings:
            by_truck.setdefault(p.truck_id, []).append(p)
        self._by_truck = {
            t: sorted(ps, key=lambda p: p.timestamp) for t, ps in by_truck.items()
        }
        self._ts = {t: [p.timestamp for p in ps] for t, ps in self._by_truck.items()}

    def truck_ids(self) -> list[str]:
        return sorted(self._by_truck)

    def window(self, truck_id: str, start: int, end: int) -> Pingset:
        ps = self._by_truck.get(truck_id, [])
        ts = self._ts.get(truck_id, [])
        lo = bisect_left(ts, start)
        hi = bisect_right(ts, end)
        return Pingset(truck_id, ps[lo:hi])

    def all_pings(self, truck_id: str) -> Pingset:
        return Pingset(truck_id, self._by_truck.get(truck_id, []))

    def first_ping(self, truck_id: str) -> Ping | None:
        ps = self._by_truck.get(truck_id)
        return ps[0] if ps else None


def window_pingset(
    pings: Sequence[Ping], truck_id: str, start: int, end: int
) -> Pingset:
    """The truck's pings with start <= t <= end (closed on both ends),
    sorted ascending."""
    if start >= end:
        raise ValueError("window start must precede end")
    selected = sorted(
        (p for p in pings if p.truck_id == truck_id and start <= p.timestamp <= end),
        key=lambda p: p.timestamp,
    )
    return Pingset(truck_id, selected)
