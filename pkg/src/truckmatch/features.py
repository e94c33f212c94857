"""Route-similarity and temporal features for a (shipment, pingset) pair.

The vector has a fixed order: hours since scheduled pickup, great-circle
distance from the latest ping to the destination, number of fine hexcells
shared with the historical lane, and total pings falling inside those
shared cells. Unknown lanes yield zero overlap features so cold-start
lanes remain scoreable.
"""

from __future__ import annotations

from dataclasses import dataclass

from .domain import Pingset, Shipment
from .errors import EmptyPingset
from .geo import haversine_km, lane_code
from .lanestore import LaneStore, lane_cell_indices, pingset_cells

FEATURE_NAMES = (
    "hours_since_pickup",
    "dist_to_dest_km",
    "overlap_cells",
    "pings_in_overlap",
)


@dataclass(frozen=True, slots=True)
class FeatureVector:
    hours_since_pickup: float
    dist_to_dest_km: float
    overlap_cells: int
    pings_in_overlap: int

    def __post_init__(self):
        if self.dist_to_dest_km < 0:
            raise ValueError("distance cannot be negative")
        if self.overlap_cells > 0 and self.pings_in_overlap < self.overlap_cells:
            raise ValueError("each overlapped cell contributes at least one ping")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (
            self.hours_since_pickup,
            self.dist_to_dest_km,
            float(self.overlap_cells),
            float(self.pings_in_overlap),
        )


def extract_features(s: Shipment, p: Pingset, store: LaneStore) -> FeatureVector:
    """Feature vector for one candidate; raises EmptyPingset / SameCellLane."""
    if len(p) == 0:
        raise EmptyPingset(f"candidate {p.truck_id} has no pings")
    lane = lane_code(s.pickup.location, s.dropoff.location)
    lane_cells = lane_cell_indices(store, lane)

    latest = p.latest()
    hours = (latest.timestamp - s.pickup.appointment) / 3600.0
    dist = haversine_km(latest.position, s.dropoff.location)

    cells = pingset_cells(p)
    seen: set[int] = set()
    overlap_cells = 0
    pings_in_overlap = 0
    for cell in cells:
        if cell.index in lane_cells:
            pings_in_overlap += 1
            if cell.index not in seen:
                overlap_cells += 1
                seen.add(cell.index)
    return FeatureVector(hours, dist, overlap_cells, pings_in_overlap)
