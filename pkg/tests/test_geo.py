import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from truckmatch.errors import SameCellLane
from truckmatch.geo import (
    PING_RES,
    STOP_RES,
    GeoPoint,
    HexCell,
    LaneCode,
    haversine_km,
    lane_code,
    ping_to_hex,
)

DENVER = GeoPoint(39.7392, -104.9903)
KC = GeoPoint(39.0997, -94.5786)


def test_haversine_known_distance():
    # Denver to Kansas City is ~900 km
    assert haversine_km(DENVER, KC) == pytest.approx(898, abs=15)


def test_haversine_zero_and_symmetry():
    assert haversine_km(DENVER, DENVER) == 0.0
    assert haversine_km(DENVER, KC) == pytest.approx(haversine_km(KC, DENVER))


@given(
    st.floats(min_value=-60, max_value=60),
    st.floats(min_value=-170, max_value=170),
    st.floats(min_value=-60, max_value=60),
    st.floats(min_value=-170, max_value=170),
)
def test_haversine_nonnegative_and_bounded(lat1, lon1, lat2, lon2):
    d = haversine_km(GeoPoint(lat1, lon1), GeoPoint(lat2, lon2))
    assert 0.0 <= d <= math.pi * 6371.0


def test_geopoint_validation():
    with pytest.raises(ValueError):
        GeoPoint(91.0, 0.0)
    with pytest.raises(ValueError):
        GeoPoint(0.0, 181.0)
    with pytest.raises(ValueError):
        GeoPoint(float("nan"), 0.0)


def test_hexcell_string_roundtrip():
    cell = ping_to_hex(DENVER, PING_RES)
    assert HexCell.from_string(str(cell)) == cell
    assert cell.resolution == PING_RES


def test_hexcell_parent():
    cell = ping_to_hex(DENVER, PING_RES)
    parent = cell.parent(STOP_RES)
    assert parent.resolution == STOP_RES


def test_lane_code_roundtrip_and_same_cell():
    lane = lane_code(DENVER, KC)
    assert LaneCode.from_string(str(lane)) == lane
    with pytest.raises(SameCellLane):
        lane_code(DENVER, GeoPoint(DENVER.lat + 1e-6, DENVER.lon))
