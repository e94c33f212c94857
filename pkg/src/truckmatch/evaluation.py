"""Offline shadow-evaluation harness and quality metrics.

Runs the streaming matcher over a labeled world side by side with the
proximity baseline, then reports coverage (assigned / eligible), precision
(correct / assigned), median distance-to-destination at assignment (MDD)
and per-DPP-bucket breakdowns. An assignment is correct when the assigned
truck actually visits both stops: a ping within 1 km of each stop inside
+/- 2 hours of the corresponding appointment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .domain import FleetIndex, Ping, Pingset, Shipment, candidate_window
from .gbdt import BoostedModel
from .geo import haversine_km
from .lanestore import LaneStore
from .pipeline import (
    ENGINE_ITM1,
    ENGINE_ITM2,
    MatchDecision,
    MatchSession,
    PipelineConfig,
    filter_candidates,
    itm1_match,
)

CORRECT_RADIUS_KM = 1.0
CORRECT_SLACK_HOURS = 2.0
#: candidate discovery: trucks whose window starts this close to the pickup
DISCOVERY_RADIUS_KM = 10.0

DPP_BUCKETS = (("<=25", 0.0, 25.0), ("<=50", 0.0, 50.0), (">=80", 80.0, 100.0))


def stop_visited(
    pings: Pingset,
    location,
    appointment: int,
    radius_km: float = CORRECT_RADIUS_KM,
    slack_hours: float = CORRECT_SLACK_HOURS,
) -> bool:
    slack_s = slack_hours * 3600.0
    for p in pings.pings:
        if abs(p.timestamp - appointment) <= slack_s:
            if haversine_km(p.position, location) <= radius_km:
                return True
    return False


def is_correct(shipment: Shipment, truck_pings: Pingset) -> bool:
    """True when the truck pings within 1 km of both stops within two
    hours of each appointment."""
    return stop_visited(
        truck_pings, shipment.pickup.location, shipment.pickup.appointment
    ) and stop_visited(
        truck_pings, shipment.dropoff.location, shipment.dropoff.appointment
    )


def dpp(shipment: Shipment, position) -> float:
    """Destination proximity percent: 100 at the pickup, 0 on arrival."""
    return 100.0 * haversine_km(position, shipment.dropoff.location) / shipment.haul_km()


def mdd(distances_km: Sequence[float]) -> float:
    """Median distance-to-destination; even counts average the middle two."""
    if not distances_km:
        raise ValueError("mdd of an empty set")
    s = sorted(distances_km)
    n = len(s)
    if n % 2 == 1:
        return s[n // 2]
    return (s[n // 2 - 1] + s[n // 2]) / 2.0


@dataclass(frozen=True)
class DecisionRecord:
    """One shipment's outcome in a shadow run."""

    shipment: Shipment
    decision: MatchDecision
    assign_ping: Optional[Ping] = None  # assigned truck's latest ping at decision
    correct: Optional[bool] = None  # None when unassigned or truth unknown

    @property
    def assigned(self) -> bool:
        return self.decision.assigned_truck is not None

    def assignment_dpp(self) -> Optional[float]:
        if self.assign_ping is None:
            return None
        return dpp(self.shipment, self.assign_ping.position)

    def assignment_distance_km(self) -> Optional[float]:
        if self.assign_ping is None:
            return None
        return haversine_km(self.assign_ping.position, self.shipment.dropoff.location)


@dataclass(frozen=True)
class BucketStats:
    n: int
    precision: Optional[float]
    mdd_km: Optional[float]


@dataclass(frozen=True)
class EvalReport:
    n_eligible: int
    n_assigned: int
    n_correct: int
    coverage: float
    precision: Optional[float]
    mdd_km: Optional[float]
    dpp_buckets: dict[str, BucketStats] = field(default_factory=dict)


def build_report(records: Sequence[DecisionRecord]) -> EvalReport:
    eligible = len(records)
    assigned = [r for r in records if r.assigned]
    scored = [r for r in assigned if r.correct is not None]
    correct = sum(1 for r in scored if r.correct)
    dists = [
        d for r in assigned if (d := r.assignment_distance_km()) is not None
    ]
    buckets = {}
    for name, lo, hi in DPP_BUCKETS:
        in_bucket = [
            r
            for r in assigned
            if (p := r.assignment_dpp()) is not None and lo <= p <= hi
        ]
        b_scored = [r for r in in_bucket if r.correct is not None]
        b_dists = [r.assignment_distance_km() for r in in_bucket]
        buckets[name] = BucketStats(
            n=len(in_bucket),
            precision=(
                sum(1 for r in b_scored if r.correct) / len(b_scored)
                if b_scored
                else None
            ),
            mdd_km=mdd(b_dists) if b_dists else None,
        )
    return EvalReport(
        n_eligible=eligible,
        n_assigned=len(assigned),
        n_correct=correct,
        coverage=len(assigned) / eligible if eligible else 0.0,
        precision=correct / len(scored) if scored else None,
        mdd_km=mdd(dists) if dists else None,
        dpp_buckets=buckets,
    )


def _discover_candidates(
    s: Shipment, fleet: FleetIndex, cfg: PipelineConfig
) -> list[Pingset]:
    """Windowed pingsets of trucks that come anywhere near the pickup."""
    start, end = candidate_window(s)
    out = []
    for tid in fleet.truck_ids():
        ps = fleet.window(tid, start, end)
        if len(ps) == 0:
            continue
        if haversine_km(ps.pings[0].position, s.pickup.location) <= DISCOVERY_RADIUS_KM:
            out.append(ps)
    return out


def _stream_one(
    s: Shipment,
    candidates: Sequence[Pingset],
    store: LaneStore,
    model: BoostedModel,
    cfg: PipelineConfig,
    assign_unconditionally: bool,
) -> tuple[MatchDecision, Optional[Ping]]:
    session = MatchSession(
        s,
        [c.truck_id for c in candidates],
        store,
        model,
        cfg,
        assign_unconditionally=assign_unconditionally,
    )
    merged = sorted(
        (p for c in candidates for p in c.pings), key=lambda p: (p.timestamp, p.truck_id)
    )
    for ping in merged:
        session.step([ping])
        if session.final:
            break
    decision = session.result()
    return decision, session.assign_ping


def shadow_run(
    shipments: Iterable[Shipment],
    fleet: FleetIndex,
    store: LaneStore,
    model: BoostedModel,
    cfg: PipelineConfig = PipelineConfig(),
    true_truck: dict[str, str] | None = None,
    engine: str = ENGINE_ITM2,
    assign_unconditionally: bool = False,
) -> list[DecisionRecord]:
    """Replay each shipment's window and record the standing decision.

    ``engine`` selects the trajectory matcher (streamed, with periodic
    re-evaluation) or the proximity baseline. Correctness is filled in when
    ground truth is supplied; note it is judged against the actual pings,
    not against the truth table, so an assigned decoy that genuinely
    covers both stops still counts as correct.
    """
    records = []
    for s in shipments:
        nearby = _discover_candidates(s, fleet, cfg)
        if engine == ENGINE_ITM1 or s.haul_km() <= cfg.short_haul_km:
            decision = itm1_match(s, nearby, cfg)
            assign_ping = None
            if decision.assigned_truck:
                # the baseline decides at the pickup: charge it the
                # qualifying ping closest to the pickup stop
                slack_s = cfg.appointment_slack_hours * 3600.0
                start, end = candidate_window(s)
                window = fleet.window(decision.assigned_truck, start, end)
                assign_ping = min(
                    (
                        p
                        for p in window.pings
                        if abs(p.timestamp - s.pickup.appointment) <= slack_s
                    ),
                    key=lambda p: haversine_km(p.position, s.pickup.location),
                )
        else:
            candidates = filter_candidates(s, nearby, cfg)
            decision, assign_ping = _stream_one(
                s, candidates, store, model, cfg, assign_unconditionally
            )
        correct = None
        if decision.assigned_truck is not None:
            correct = is_correct(s, fleet.all_pings(decision.assigned_truck))
        records.append(
            DecisionRecord(
                shipment=s, decision=decision, assign_ping=assign_ping, correct=correct
            )
        )
    return records


ABLATIONS = ("full", "no_postprocess", "no_hexcell")


def ablate(
    shipments: Sequence[Shipment],
    fleet: FleetIndex,
    store: LaneStore,
    model: BoostedModel,
    model_no_hexcell: BoostedModel,
    cfg: PipelineConfig = PipelineConfig(),
) -> dict[str, list[DecisionRecord]]:
    """The three ablation runs of the trajectory engine.

    ``no_postprocess`` keeps the full model but commits to the ungated
    argmax as soon as the candidate stream has matured, skipping the
    confidence protocol. ``no_hexcell`` keeps the protocol but scores with
    a model trained on the temporal features only.
    """
    return {
        "full": shadow_run(shipments, fleet, store, model, cfg),
        "no_postprocess": shadow_run(
            shipments, fleet, store, model, cfg, assign_unconditionally=True
        ),
        "no_hexcell": shadow_run(shipments, fleet, store, model_no_hexcell, cfg),
    }
