import pytest

from truckmatch.errors import EmptyPingset
from truckmatch.features import FEATURE_NAMES, FeatureVector, extract_features
from truckmatch.geo import haversine_km
from truckmatch.lanestore import LaneStore, build_lane_store, lane_cell_indices, pingset_cells
from truckmatch.domain import Pingset
from truckmatch.geo import lane_code

from conftest import T0, make_shipment, straight_line_pings


def test_feature_vector_invariants():
    with pytest.raises(ValueError):
        FeatureVector(1.0, -0.1, 0, 0)
    with pytest.raises(ValueError):
        FeatureVector(1.0, 5.0, overlap_cells=3, pings_in_overlap=2)
    v = FeatureVector(1.0, 5.0, 3, 7)
    assert v.as_tuple() == (1.0, 5.0, 3.0, 7.0)
    assert len(FEATURE_NAMES) == 4


def test_empty_pingset_raises(shipment):
    with pytest.raises(EmptyPingset):
        extract_features(shipment, Pingset("T1"), LaneStore())


def test_unknown_lane_gives_zero_overlap(shipment, journey):
    v = extract_features(shipment, journey, LaneStore())
    assert v.overlap_cells == 0 and v.pings_in_overlap == 0
    assert v.hours_since_pickup == pytest.approx(
        (journey.latest().timestamp - shipment.pickup.appointment) / 3600.0
    )
    assert v.dist_to_dest_km == pytest.approx(
        haversine_km(journey.latest().position, shipment.dropoff.location)
    )


def test_overlap_oracle(shipment, journey):
    """Counts match a direct set computation on the same history."""
    store = build_lane_store([(shipment, journey)])
    lane = lane_code(shipment.pickup.location, shipment.dropoff.location)
    lane_cells = lane_cell_indices(store, lane)
    v = extract_features(shipment, journey, store)
    cells = [c.index for c in pingset_cells(journey)]
    assert v.pings_in_overlap == sum(1 for c in cells if c in lane_cells)
    assert v.overlap_cells == len({c for c in cells if c in lane_cells})
    # the journey built the lane, so every ping overlaps
    assert v.pings_in_overlap == len(journey)


def test_overlap_monotone_in_prefix(shipment, journey):
    """On-lane journeys: overlap features never decrease as pings accrue."""
    store = build_lane_store([(shipment, journey)])
    prev = (0, 0)
    for n in range(1, len(journey) + 1):
        v = extract_features(shipment, journey.prefix(n), store)
        assert (v.overlap_cells, v.pings_in_overlap) >= prev
        prev = (v.overlap_cells, v.pings_in_overlap)


def test_off_lane_journey_has_less_overlap(shipment, journey):
    store = build_lane_store([(shipment, journey)])
    off = straight_line_pings(truck="T9", start=(39.7392, -104.9903), end=(43.0, -104.0))
    v_on = extract_features(shipment, journey, store)
    v_off = extract_features(shipment, Pingset("T9", off.pings), store)
    assert v_off.overlap_cells < v_on.overlap_cells
