"""End-to-end matcher: candidate filtering, probabilistic scoring,
threshold post-processing, periodic re-evaluation, short-haul routing and
the proximity-rule baseline engine.

Two engines exist. The trajectory engine (``ITM2``) scores candidates with
the boosted model over lane-overlap features and gates assignments through
confidence thresholds. The baseline (``ITM1``) assigns the nearest truck
pinging within 500 m of the pickup around the appointment and uses no
trajectory information; shipments at or below the short-haul cutoff are
routed to it.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

from .domain import Ping, Pingset, Shipment
from .errors import NoEligibleCandidates
from .features import FeatureVector, extract_features
from .gbdt import BoostedModel, predict
from .geo import haversine_km, lane_code
from .lanestore import LaneStore, lane_cell_indices, pingset_cells

LOW, MEDIUM, HIGH = "LOW", "MEDIUM", "HIGH"
ENGINE_ITM1, ENGINE_ITM2 = "ITM1", "ITM2"

#: The baseline's fixed proximity rule, deliberately not configurable.
ITM1_RADIUS_KM = 0.5


@dataclass(frozen=True, slots=True)
class Thresholds:
    tau_min: float = 0.3
    tau_medium: float = 0.5
    tau_high: float = 0.8

    def __post_init__(self):
        if not 0.0 < self.tau_min <= self.tau_medium <= self.tau_high < 1.0:
            raise ValueError("need 0 < tau_min <= tau_medium <= tau_high < 1")

    def label(self, p: float) -> str:
        if p >= self.tau_high:
            return HIGH
        if p >= self.tau_medium:
            return MEDIUM
        return LOW


@dataclass(frozen=True)
class MatchDecision:
    engine: str
    assigned_truck: Optional[str] = None
    ranked: tuple[tuple[str, float, str], ...] = ()  # (truck, prob, label) desc
    deferred: bool = False
    eval_count: int = 0
    pings_seen: int = 0

    @property
    def confidence(self) -> str:
        return self.ranked[0][2] if self.assigned_truck else LOW

    @property
    def probability(self) -> Optional[float]:
        return self.ranked[0][1] if self.assigned_truck else None


@dataclass(frozen=True)
class PipelineConfig:
    pickup_radius_km: float = 1.0
    min_pings: int = 20
    reeval_every_pings: int = 5
    thresholds: Thresholds = field(default_factory=Thresholds)
    short_haul_km: float = 40.0
    appointment_slack_hours: float = 2.0

    def __post_init__(self):
        if min(
            self.pickup_radius_km,
            self.min_pings,
            self.reeval_every_pings,
            self.short_haul_km,
            self.appointment_slack_hours,
        ) <= 0:
            raise ValueError("all pipeline knobs must be positive")


def _has_witness_ping(
    pingset: Pingset, shipment: Shipment, radius_km: float, slack_s: float
) -> bool:
    appt = shipment.pickup.appointment
    pickup = shipment.pickup.location
    for p in pingset.pings:
        if abs(p.timestamp - appt) <= slack_s and haversine_km(p.position, pickup) <= radius_km:
            return True
    return False


def filter_candidates(
    s: Shipment,
    fleet: Sequence[Pingset],
    cfg: PipelineConfig = PipelineConfig(),
    carriers: Mapping[str, str] | None = None,
) -> list[Pingset]:
    """Trucks with a ping near the pickup around the appointment time.

    When a truck->carrier mapping is supplied and the shipment names a
    carrier, candidates are restricted to that carrier.
    """
    slack_s = cfg.appointment_slack_hours * 3600.0
    out = []
    for pingset in fleet:
        if carriers is not None and s.carrier_id:
            if carriers.get(pingset.truck_id) != s.carrier_id:
                continue
        if _has_witness_ping(pingset, s, cfg.pickup_radius_km, slack_s):
            out.append(pingset)
    return out


def score_candidates(
    s: Shipment,
    candidates: Sequence[Pingset],
    store: LaneStore,
    model: BoostedModel,
    cfg: PipelineConfig = PipelineConfig(),
) -> list[tuple[str, float]]:
    """Match probability per candidate with enough pings; raises
    NoEligibleCandidates when every candidate is still too sparse."""
    scored = []
    for pingset in candidates:
        if len(pingset) < cfg.min_pings:
            continue
        scored.append((pingset.truck_id, predict(model, extract_features(s, pingset, store))))
    if candidates and not scored:
        raise NoEligibleCandidates(
            f"shipment {s.shipment_id}: no candidate has {cfg.min_pings} pings yet"
        )
    return scored


def postprocess(
    scored: Sequence[tuple[str, float]],
    t: Thresholds = Thresholds(),
    engine: str = ENGINE_ITM2,
) -> MatchDecision:
    """Threshold filter, descending sort, confidence labels, argmax pick.

    Ties at the top probability resolve to the lexicographically smaller
    truck id.
    """
    tau_min, tau_medium, tau_high = t.tau_min, t.tau_medium, t.tau_high
    # sort on (-p, truck): probability descending, lexicographic tie-break
    kept = sorted((-p, truck) for truck, p in scored if p >= tau_min)
    if not kept:
        return MatchDecision(engine=engine)
    ranked = tuple(
        (truck, -neg_p, HIGH if -neg_p >= tau_high else MEDIUM if -neg_p >= tau_medium else LOW)
        for neg_p, truck in kept
    )
    return MatchDecision(engine=engine, assigned_truck=ranked[0][0], ranked=ranked)


def itm1_match(
    s: Shipment,
    fleet: Sequence[Pingset],
    cfg: PipelineConfig = PipelineConfig(),
) -> MatchDecision:
    """Baseline rule: nearest truck pinging within 500 m of the pickup
    inside the appointment window. Scores are proximity ratios, not
    probabilities."""
    slack_s = cfg.appointment_slack_hours * 3600.0
    appt = s.pickup.appointment
    qualifying = []
    for pingset in fleet:
        dmin = None
        for p in pingset.pings:
            if abs(p.timestamp - appt) > slack_s:
                continue
            d = haversine_km(p.position, s.pickup.location)
            if d <= ITM1_RADIUS_KM and (dmin is None or d < dmin):
                dmin = d
        if dmin is not None:
            qualifying.append((pingset.truck_id, dmin))
    if not qualifying:
        return MatchDecision(engine=ENGINE_ITM1)
    qualifying.sort(key=lambda td: (td[1], td[0]))
    ranked = tuple(
        (truck, max(0.0, 1.0 - d / ITM1_RADIUS_KM), HIGH) for truck, d in qualifying
    )
    return MatchDecision(engine=ENGINE_ITM1, assigned_truck=ranked[0][0], ranked=ranked)


def match(
    s: Shipment,
    fleet: Sequence[Pingset],
    store: LaneStore,
    model: BoostedModel,
    cfg: PipelineConfig = PipelineConfig(),
    carriers: Mapping[str, str] | None = None,
) -> MatchDecision:
    """One-shot matching over complete candidate pingsets."""
    if s.haul_km() <= cfg.short_haul_km:
        return itm1_match(s, fleet, cfg)
    candidates = filter_candidates(s, fleet, cfg, carriers)
    if not candidates:
        return MatchDecision(engine=ENGINE_ITM2)
    try:
        scored = score_candidates(s, candidates, store, model, cfg)
    except NoEligibleCandidates:
        return MatchDecision(engine=ENGINE_ITM2, deferred=True)
    return postprocess(scored, cfg.thresholds)


class _CandidateState:
    __slots__ = (
        "truck_id",
        "n_pings",
        "latest",
        "cell_counts",
        "overlap_cells",
        "pings_in_overlap",
        "dirty",
        "prob",
    )

    def __init__(self, truck_id: str):
        self.truck_id = truck_id
        self.n_pings = 0
        self.latest: Ping | None = None
        self.cell_counts: dict[int, int] = {}
        self.overlap_cells = 0
        self.pings_in_overlap = 0
        self.dirty = True
        self.prob: float | None = None


class MatchSession:
    """Streaming re-evaluation for one shipment.

    Feed pings with :meth:`step`; an evaluation fires once
    ``reeval_every_pings`` candidate pings have accumulated since the last
    one. A HIGH-confidence assignment is final (sticky); MEDIUM/LOW
    assignments may be revised by later evaluations. Overlap features are
    maintained incrementally and match ``extract_features`` on the prefix
    pingset exactly.

    ``assign_unconditionally`` drops the post-processing protocol — no
    probability floor and no confidence gating. Without confidence labels
    there is no signal for when the ranking is trustworthy, so the session
    commits to the raw argmax at the operational deadline: the first
    evaluation past the midpoint of the scheduled transit (the
    no-postprocessing ablation).
    """

    def __init__(
        self,
        shipment: Shipment,
        candidate_ids: Iterable[str],
        store: LaneStore,
        model: BoostedModel,
        cfg: PipelineConfig = PipelineConfig(),
        assign_unconditionally: bool = False,
    ):
        self.shipment = shipment
        self.store = store
        self.model = model
        self.cfg = cfg
        self.assign_unconditionally = assign_unconditionally
        self.lane_cells = lane_cell_indices(
            store, lane_code(shipment.pickup.location, shipment.dropoff.location)
        )
        self.states = {tid: _CandidateState(tid) for tid in candidate_ids}
        self.pings_seen = 0
        self.eval_count = 0
        self._since_eval = 0
        self._latest_ts: int | None = None
        self._deadline = (shipment.pickup.appointment + shipment.dropoff.appointment) / 2.0
        self.decision: MatchDecision | None = None
        self.assign_ping: Ping | None = None  # assigned truck's latest ping at decision
        self.final = False

    def step(self, new_pings: Iterable[Ping]) -> Optional[MatchDecision]:
        """Absorb pings; returns a decision when an evaluation fires."""
        if self.final:
            return None
        for ping in new_pings:
            state = self.states.get(ping.truck_id)
            if state is None:
                continue
            self._absorb(state, ping)
            self.pings_seen += 1
            self._since_eval += 1
            if self._latest_ts is None or ping.timestamp > self._latest_ts:
                self._latest_ts = ping.timestamp
        if self._since_eval >= self.cfg.reeval_every_pings:
            self._since_eval = 0
            return self._evaluate()
        return None

    def _absorb(self, state: _CandidateState, ping: Ping) -> None:
        cell = pingset_cells(Pingset(ping.truck_id, (ping,)))[0].index
        state.n_pings += 1
        state.latest = ping
        prev = state.cell_counts.get(cell, 0)
        state.cell_counts[cell] = prev + 1
        if cell in self.lane_cells:
            state.pings_in_overlap += 1
            if prev == 0:
                state.overlap_cells += 1
        state.dirty = True

    def _features(self, state: _CandidateState) -> FeatureVector:
        latest = state.latest
        return FeatureVector(
            hours_since_pickup=(latest.timestamp - self.shipment.pickup.appointment)
            / 3600.0,
            dist_to_dest_km=haversine_km(latest.position, self.shipment.dropoff.location),
            overlap_cells=state.overlap_cells,
            pings_in_overlap=state.pings_in_overlap,
        )

    def _evaluate(self) -> Optional[MatchDecision]:
        scored = []
        for tid in sorted(self.states):
            state = self.states[tid]
            if state.n_pings < self.cfg.min_pings:
                continue
            if state.dirty or state.prob is None:
                state.prob = predict(self.model, self._features(state))
                state.dirty = False
            scored.append((tid, state.prob))
        self.eval_count += 1
        if not scored:
            decision = MatchDecision(
                engine=ENGINE_ITM2,
                deferred=True,
                eval_count=self.eval_count,
                pings_seen=self.pings_seen,
            )
            self.decision = decision
            return decision

        if self.assign_unconditionally:
            ranked = sorted(scored, key=lambda tp: (-tp[1], tp[0]))
            labels = tuple(
                (t, p, self.cfg.thresholds.label(p)) for t, p in ranked
            )
            decision = MatchDecision(
                engine=ENGINE_ITM2,
                assigned_truck=ranked[0][0],
                ranked=labels,
                eval_count=self.eval_count,
                pings_seen=self.pings_seen,
            )
            if self._latest_ts is not None and self._latest_ts >= self._deadline:
                self.final = True
        else:
            decision = replace(
                postprocess(scored, self.cfg.thresholds),
                eval_count=self.eval_count,
                pings_seen=self.pings_seen,
            )
            if decision.assigned_truck and decision.confidence == HIGH:
                self.final = True
        self.decision = decision
        if decision.assigned_truck:
            self.assign_ping = self.states[decision.assigned_truck].latest
        return decision

    def result(self) -> MatchDecision:
        """The standing decision after the stream ends."""
        if not self.final and (self._since_eval > 0 or self.decision is None):
            # flush the trailing partial interval so late pings still count
            self._since_eval = 0
            return self._evaluate()
        return self.decision
