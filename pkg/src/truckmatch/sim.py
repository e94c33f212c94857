"""Synthetic fleet generator with labeled ground truth.

Builds a corpus of city-to-city shipments. Every shipment gets one true
truck driving a jittered corridor route between the stop cities and a set
of decoy trucks that dwell at the same origin during the appointment
window but drive to other cities (most of them in a similar initial
direction, so decoys are not trivially separable early in the journey).
Shipment stop coordinates are perturbed by a geocode-noise vector; pings
carry small GPS jitter and independent dropout.

Generation is single-threaded and fully determined by the seed.
"""

from __future__ import annotations

import csv
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .domain import (
    FleetIndex,
    Ping,
    Shipment,
    Stop,
    load_pings,
    load_shipments,
    save_pings,
    save_shipments,
)
from .errors import ConfigError, FormatError
from .geo import GeoPoint, haversine_km

_KM_PER_DEG = math.pi * 6371.0 / 180.0
#: Generation epoch: 2024-01-01T00:00:00Z
_T0 = 1704067200


@dataclass(frozen=True)
class SimConfig:
    n_cities: int = 16  # placed as metro pairs: anchor + nearby partner
    n_shipments: int = 200
    n_lanes: int = 30
    routes_per_lane: int = 3
    ping_interval_s: int = 300
    ping_dropout: float = 0.1
    geocode_noise_km: tuple[float, float] = (0.0, 1.0)  # (min, max) magnitude
    decoys_per_shipment: int = 5
    speed_kmh: float = 70.0
    appointment_jitter_h: float = 0.5
    seed: int = 0
    n_carriers: int = 4
    gps_jitter_km: float = 0.03
    depot_scatter_km: float = 0.15
    dwell_minutes: int = 30
    span_days: int = 60
    city_box: tuple[float, float, float, float] = (33.0, 44.0, -112.0, -99.0)
    min_city_gap_km: float = 160.0
    pair_gap_km: tuple[float, float] = (18.0, 30.0)
    min_lane_km: float = 300.0  # shipment lanes; decoys may drive shorter hops
    #: chance a decoy bound for the destination's metro partner is present
    twin_rate: float = 0.85
    #: decoys that ride the shipment's corridor before branching off
    corridor_decoys: int = 0
    #: chance the true truck's ELD goes dark partway through the journey
    outage_rate: float = 0.2

    def __post_init__(self):
        if self.n_cities < 4 or self.n_shipments < 1 or self.n_lanes < 1:
            raise ConfigError("need at least 4 cities, 1 lane and 1 shipment")
        if self.decoys_per_shipment > self.n_cities - 2:
            raise ConfigError("not enough cities for distinct decoy destinations")
        if not 0.0 <= self.ping_dropout < 1.0:
            raise ConfigError("ping_dropout must be in [0, 1)")
        lo, hi = self.geocode_noise_km
        if lo < 0 or hi < lo:
            raise ConfigError("geocode_noise_km must be a (min, max) with 0 <= min <= max")
        if not 0.0 <= self.twin_rate <= 1.0 or not 0.0 <= self.outage_rate <= 1.0:
            raise ConfigError("twin_rate and outage_rate must be in [0, 1]")
        if self.n_lanes > self.n_cities * (self.n_cities - 1):
            raise ConfigError("more lanes than ordered city pairs")


@dataclass
class GroundTruth:
    true_truck: dict[str, str] = field(default_factory=dict)  # shipment -> truck
    truck_origin_dest: dict[str, tuple[GeoPoint, GeoPoint]] = field(default_factory=dict)
    truck_carrier: dict[str, str] = field(default_factory=dict)
    decoys: dict[str, tuple[str, ...]] = field(default_factory=dict)


@dataclass
class World:
    config: SimConfig
    cities: list[GeoPoint]
    partners: dict[int, int]  # metro-pair city index map
    shipments: list[Shipment]
    pings: list[Ping]
    truth: GroundTruth

    def fleet_index(self) -> FleetIndex:
        return FleetIndex(self.pings)


def _offset_km(p: GeoPoint, dx_km: float, dy_km: float) -> GeoPoint:
    lat = p.lat + dy_km / _KM_PER_DEG
    lon = p.lon + dx_km / (_KM_PER_DEG * math.cos(math.radians(p.lat)))
    return GeoPoint(lat, lon)


def _random_offset(rng: random.Random, p: GeoPoint, magnitude_km: float) -> GeoPoint:
    angle = rng.uniform(0.0, 2.0 * math.pi)
    return _offset_km(p, magnitude_km * math.cos(angle), magnitude_km * math.sin(angle))


def _bearing_deg(a: GeoPoint, b: GeoPoint) -> float:
    dx = (b.lon - a.lon) * math.cos(math.radians((a.lat + b.lat) / 2.0))
    dy = b.lat - a.lat
    return math.degrees(math.atan2(dy, dx))


def _bearing_gap(x: float, y: float) -> float:
    d = abs(x - y) % 360.0
    return min(d, 360.0 - d)


def _sample_cities(cfg: SimConfig) -> tuple[list[GeoPoint], dict[int, int]]:
    """Cities laid out as metro pairs: well-separated anchors, each with a
    partner city a couple dozen kilometres away. Returns (cities,
    partner-index map); an odd final city has no partner."""
    rng = random.Random(f"cities:{cfg.seed}")
    lat_lo, lat_hi, lon_lo, lon_hi = cfg.city_box
    n_anchors = (cfg.n_cities + 1) // 2
    anchors: list[GeoPoint] = []
    attempts = 0
    while len(anchors) < n_anchors:
        attempts += 1
        if attempts > 20000:
            raise ConfigError("could not place cities with the requested separation")
        c = GeoPoint(rng.uniform(lat_lo, lat_hi), rng.uniform(lon_lo, lon_hi))
        if all(haversine_km(c, o) >= cfg.min_city_gap_km for o in anchors):
            anchors.append(c)
    cities = list(anchors)
    partner: dict[int, int] = {}
    for i in range(cfg.n_cities - n_anchors):
        gap = rng.uniform(*cfg.pair_gap_km)
        cities.append(_random_offset(rng, anchors[i], gap))
        partner[i] = len(cities) - 1
        partner[len(cities) - 1] = i
    return cities, partner


def _route_variants(cfg: SimConfig, cities: Sequence[GeoPoint], oi: int, di: int):
    """Deterministic corridor variants for a city pair: straight path bent
    through 1-3 waypoints with perpendicular offsets up to 5 km."""
    rng = random.Random(f"routes:{cfg.seed}:{oi}:{di}")
    origin, dest = cities[oi], cities[di]
    dx = (dest.lon - origin.lon) * math.cos(math.radians((origin.lat + dest.lat) / 2.0))
    dy = dest.lat - origin.lat
    norm = math.hypot(dx, dy)
    perp = (-dy / norm, dx / norm)  # unit, in degree-space scaled by km below
    variants = []
    for _ in range(cfg.routes_per_lane):
        k = rng.randint(1, 3)
        waypoints = []
        for i in range(1, k + 1):
            f = i / (k + 1)
            base = GeoPoint(origin.lat + f * (dest.lat - origin.lat),
                            origin.lon + f * (dest.lon - origin.lon))
            off = rng.uniform(-5.0, 5.0)
            waypoints.append(_offset_km(base, off * perp[0], off * perp[1]))
        variants.append(waypoints)
    return variants


def _polyline_cum(points: Sequence[GeoPoint]) -> list[float]:
    cum = [0.0]
    for a, b in zip(points, points[1:]):
        cum.append(cum[-1] + haversine_km(a, b))
    return cum


def _interp(points: Sequence[GeoPoint], cum: Sequence[float], s: float) -> GeoPoint:
    if s <= 0:
        return points[0]
    if s >= cum[-1]:
        return points[-1]
    for i in range(1, len(cum)):
        if s <= cum[i]:
            seg = cum[i] - cum[i - 1]
            f = 0.0 if seg == 0 else (s - cum[i - 1]) / seg
            a, b = points[i - 1], points[i]
            return GeoPoint(a.lat + f * (b.lat - a.lat), a.lon + f * (b.lon - a.lon))
    return points[-1]


def _journey_pings(
    rng: random.Random,
    truck_id: str,
    polyline: Sequence[GeoPoint],
    depart_ts: float,
    speed_kmh: float,
    cfg: SimConfig,
) -> list[Ping]:
    cum = _polyline_cum(polyline)
    drive_s = cum[-1] / speed_kmh * 3600.0
    dwell_s = cfg.dwell_minutes * 60.0
    pings = []

    def emit(pos: GeoPoint, ts: float) -> None:
        jx = rng.gauss(0.0, cfg.gps_jitter_km)
        jy = rng.gauss(0.0, cfg.gps_jitter_km)
        dropped = rng.random() < cfg.ping_dropout
        if not dropped:
            pings.append(Ping(truck_id, _offset_km(pos, jx, jy), int(round(ts))))

    t = depart_ts - dwell_s
    while t < depart_ts:
        emit(polyline[0], t)
        t += cfg.ping_interval_s
    t = depart_ts
    while t <= depart_ts + drive_s:
        emit(_interp(polyline, cum, speed_kmh * (t - depart_ts) / 3600.0), t)
        t += cfg.ping_interval_s
    arrival = depart_ts + drive_s
    t = arrival + cfg.ping_interval_s
    while t <= arrival + dwell_s:
        emit(polyline[-1], t)
        t += cfg.ping_interval_s
    return pings


def generate_world(cfg: SimConfig) -> World:
    """Deterministic world: shipments, fleet pings and ground truth."""
    cities, partner = _sample_cities(cfg)
    rng = random.Random(f"world:{cfg.seed}")

    pair_pool = [
        (oi, di)
        for oi in range(cfg.n_cities)
        for di in range(cfg.n_cities)
        if oi != di and haversine_km(cities[oi], cities[di]) >= cfg.min_lane_km
    ]
    rng.shuffle(pair_pool)
    lanes = pair_pool[: cfg.n_lanes]
    route_cache: dict[tuple[int, int], list] = {}

    def variants(oi: int, di: int):
        if (oi, di) not in route_cache:
            route_cache[(oi, di)] = _route_variants(cfg, cities, oi, di)
        return route_cache[(oi, di)]

    truth = GroundTruth()
    shipments: list[Shipment] = []
    all_pings: list[Ping] = []
    truck_seq = 0
    noise_lo, noise_hi = cfg.geocode_noise_km
    jitter_s = cfg.appointment_jitter_h * 3600.0

    for i in range(cfg.n_shipments):
        oi, di = lanes[rng.randrange(len(lanes))]
        origin, dest = cities[oi], cities[di]
        sid = f"S{i + 1:05d}"
        carrier = f"C{rng.randrange(cfg.n_carriers)}"

        pickup_appt = _T0 + rng.uniform(0.0, cfg.span_days * 86400.0)
        waypoints = variants(oi, di)[rng.randrange(cfg.routes_per_lane)]
        # appointments follow the planned route at nominal speed
        plan_km = _polyline_cum([origin, *waypoints, dest])[-1]
        drop_appt = pickup_appt + plan_km / cfg.speed_kmh * 3600.0
        pickup_loc = _random_offset(rng, origin, rng.uniform(noise_lo, noise_hi))
        drop_loc = _random_offset(rng, dest, rng.uniform(noise_lo, noise_hi))
        shipment = Shipment(
            shipment_id=sid,
            pickup=Stop(pickup_loc, int(round(pickup_appt))),
            dropoff=Stop(drop_loc, int(round(drop_appt))),
            carrier_id=carrier,
        )
        shipments.append(shipment)

        # true truck
        truck_seq += 1
        true_tid = f"T{truck_seq:05d}"
        depot = _random_offset(rng, origin, rng.uniform(0.0, cfg.depot_scatter_km))
        dest_depot = _random_offset(rng, dest, rng.uniform(0.0, cfg.depot_scatter_km))
        polyline = [depot, *waypoints, dest_depot]
        depart = pickup_appt + rng.uniform(-jitter_s, jitter_s)
        speed = cfg.speed_kmh * rng.uniform(0.95, 1.05)
        true_pings = _journey_pings(rng, true_tid, polyline, depart, speed, cfg)
        if rng.random() < cfg.outage_rate:
            # ELD goes dark partway through the drive
            dark_after = depart + rng.uniform(0.1, 0.4) * (
                _polyline_cum(polyline)[-1] / speed * 3600.0
            )
            true_pings = [p for p in true_pings if p.timestamp <= dark_after]
        all_pings.extend(true_pings)
        truth.true_truck[sid] = true_tid
        truth.truck_origin_dest[true_tid] = (origin, dest)
        truth.truck_carrier[true_tid] = carrier

        # Decoys leave the same origin during the appointment window but
        # serve other cities. A "twin" heads for the destination's metro
        # partner (nearly parallel route, ends a couple dozen km short);
        # "corridor" decoys ride the shipment's corridor and branch off
        # partway; the rest drive their own lanes from the start.
        others = [ci for ci in range(cfg.n_cities) if ci not in (oi, di)]
        true_bearing = _bearing_deg(origin, dest)
        others.sort(
            key=lambda ci: (_bearing_gap(_bearing_deg(origin, cities[ci]), true_bearing), ci)
        )
        roster: list[tuple[int, str]] = []  # (dest city, decoy kind)
        twin_ci = partner.get(di)
        if (
            twin_ci is not None
            and twin_ci != oi
            and rng.random() < cfg.twin_rate
        ):
            roster.append((twin_ci, "twin"))
        corridor_pool = [ci for ci in others if ci != twin_ci]
        for ci in corridor_pool[: cfg.corridor_decoys]:
            if len(roster) < cfg.decoys_per_shipment:
                roster.append((ci, "corridor"))
        used = {ci for ci, _ in roster}
        for ci in reversed(others):  # most dissimilar bearings first
            if len(roster) >= cfg.decoys_per_shipment:
                break
            if ci not in used:
                roster.append((ci, "far"))
                used.add(ci)

        true_route = [origin, *waypoints, dest]
        true_cum = _polyline_cum(true_route)
        decoy_ids = []
        for ci, kind in roster:
            truck_seq += 1
            tid = f"T{truck_seq:05d}"
            decoy_ids.append(tid)
            d_depot = _random_offset(rng, origin, rng.uniform(0.0, cfg.depot_scatter_km))
            d_dest = _random_offset(rng, cities[ci], rng.uniform(0.0, cfg.depot_scatter_km))
            if kind == "corridor":
                branch_s = rng.uniform(0.15, 0.85) * true_cum[-1]
                shared = [
                    p for p, c in zip(true_route[1:-1], true_cum[1:-1]) if c < branch_s
                ]
                branch_pt = _interp(true_route, true_cum, branch_s)
                d_poly = [d_depot, *shared, branch_pt, d_dest]
            else:
                d_way = variants(oi, ci)[rng.randrange(cfg.routes_per_lane)]
                d_poly = [d_depot, *d_way, d_dest]
            # decoys run their own schedules and skew a bit earlier than
            # the shipment's appointment
            d_depart = pickup_appt + rng.uniform(-2.0 * jitter_s, 1.0 * jitter_s)
            d_speed = cfg.speed_kmh * rng.uniform(0.95, 1.05)
            all_pings.extend(_journey_pings(rng, tid, d_poly, d_depart, d_speed, cfg))
            truth.truck_origin_dest[tid] = (origin, cities[ci])
            truth.truck_carrier[tid] = carrier
        truth.decoys[sid] = tuple(decoy_ids)

    return World(
        config=cfg,
        cities=cities,
        partners=partner,
        shipments=shipments,
        pings=all_pings,
        truth=truth,
    )


def split_history_vs_eval(
    world: World,
    fraction: float = 0.6,
    cold_start_lanes: int = 0,
) -> tuple[list[Shipment], list[Shipment]]:
    """Disjoint (history, eval) shipment sets. History receives at least
    one shipment of every lane unless the lane is deliberately held out
    via cold_start_lanes."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    rng = random.Random(f"split:{world.config.seed}")
    order = list(world.shipments)
    rng.shuffle(order)
    n_hist = max(1, int(round(fraction * len(order))))
    history = order[:n_hist]
    evals = order[n_hist:]

    def lane_of(s: Shipment) -> tuple[int, int]:
        origin, dest = world.truth.truck_origin_dest[world.truth.true_truck[s.shipment_id]]
        return (round(origin.lat * 1e6), round(origin.lon * 1e6), round(dest.lat * 1e6), round(dest.lon * 1e6))

    hist_lanes = {lane_of(s) for s in history}
    moved = []
    for s in list(evals):
        if lane_of(s) not in hist_lanes:
            evals.remove(s)
            history.append(s)
            hist_lanes.add(lane_of(s))
            moved.append(s)

    if cold_start_lanes > 0:
        lanes = sorted({lane_of(s) for s in history})
        held = set(rng.sample(lanes, min(cold_start_lanes, len(lanes))))
        for s in list(history):
            if lane_of(s) in held:
                history.remove(s)
                evals.append(s)

    history.sort(key=lambda s: s.shipment_id)
    evals.sort(key=lambda s: s.shipment_id)
    return history, evals


# --- world persistence -----------------------------------------------------

def save_world(world: World, out_dir: str | Path, fraction: float = 0.6,
               cold_start_lanes: int = 0) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_pings(world.pings, out / "pings.ndjson")
    save_shipments(world.shipments, out / "shipments.ndjson")
    with open(out / "ground_truth.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["shipment_id", "true_truck_id"])
        for s in world.shipments:
            w.writerow([s.shipment_id, world.truth.true_truck[s.shipment_id]])
    with open(out / "trucks.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["truck_id", "carrier_id", "origin_lat", "origin_lon", "dest_lat", "dest_lon"])
        for tid in sorted(world.truth.truck_origin_dest):
            o, d = world.truth.truck_origin_dest[tid]
            w.writerow([tid, world.truth.truck_carrier[tid],
                        repr(o.lat), repr(o.lon), repr(d.lat), repr(d.lon)])
    history, evals = split_history_vs_eval(world, fraction, cold_start_lanes)
    with open(out / "split.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "history": [s.shipment_id for s in history],
                "eval": [s.shipment_id for s in evals],
            },
            fh,
            indent=1,
            sort_keys=True,
        )
        fh.write("\n")
    with open(out / "decoys.json", "w", encoding="utf-8") as fh:
        json.dump({sid: list(t) for sid, t in sorted(world.truth.decoys.items())},
                  fh, indent=1, sort_keys=True)
        fh.write("\n")


@dataclass
class WorldData:
    """A world reloaded from disk (no SimConfig or city list)."""

    shipments: list[Shipment]
    fleet: FleetIndex
    truth: GroundTruth
    history_ids: list[str]
    eval_ids: list[str]

    def shipment(self, sid: str) -> Shipment:
        for s in self.shipments:
            if s.shipment_id == sid:
                return s
        raise KeyError(sid)


def load_world(world_dir: str | Path) -> WorldData:
    d = Path(world_dir)
    for name in ("pings.ndjson", "shipments.ndjson", "ground_truth.csv", "split.json"):
        if not (d / name).exists():
            raise FormatError(f"world directory {d} is missing {name}")
    pings, _ = load_pings(d / "pings.ndjson")
    shipments = load_shipments(d / "shipments.ndjson")
    truth = GroundTruth()
    with open(d / "ground_truth.csv", encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            truth.true_truck[rec["shipment_id"]] = rec["true_truck_id"]
    trucks = d / "trucks.csv"
    if trucks.exists():
        with open(trucks, encoding="utf-8", newline="") as fh:
            for rec in csv.DictReader(fh):
                truth.truck_origin_dest[rec["truck_id"]] = (
                    GeoPoint(float(rec["origin_lat"]), float(rec["origin_lon"])),
                    GeoPoint(float(rec["dest_lat"]), float(rec["dest_lon"])),
                )
                truth.truck_carrier[rec["truck_id"]] = rec["carrier_id"]
    decoys = d / "decoys.json"
    if decoys.exists():
        with open(decoys, encoding="utf-8") as fh:
            truth.decoys = {sid: tuple(t) for sid, t in json.load(fh).items()}
    with open(d / "split.json", encoding="utf-8") as fh:
        split = json.load(fh)
    return WorldData(
        shipments=shipments,
        fleet=FleetIndex(pings),
        truth=truth,
        history_ids=split["history"],
        eval_ids=split["eval"],
    )
