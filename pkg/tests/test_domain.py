import json

import pytest

from truckmatch.domain import (
    WINDOW_PAD_HOURS,
    FleetIndex,
    Ping,
    Pingset,
    Shipment,
    Stop,
    candidate_window,
    load_pings,
    load_shipments,
    ping_from_record,
    save_pings,
    save_shipments,
    window_pingset,
)
from truckmatch.errors import SchemaError
from truckmatch.geo import GeoPoint

from conftest import T0, make_ping, make_shipment


def test_pingset_rejects_wrong_truck_and_disorder():
    with pytest.raises(ValueError):
        Pingset("T1", [make_ping(truck="T2")])
    with pytest.raises(ValueError):
        Pingset("T1", [make_ping(ts=T0 + 10), make_ping(ts=T0)])


def test_pingset_prefix_and_latest():
    ps = Pingset("T1", [make_ping(ts=T0 + i) for i in range(5)])
    assert len(ps.prefix(3)) == 3
    assert ps.latest().timestamp == T0 + 4


def test_shipment_validation():
    with pytest.raises(ValueError):
        make_shipment(pickup_ts=T0, drop_ts=T0)
    with pytest.raises(ValueError):
        make_shipment(pickup=(39.7, -104.9), dropoff=(39.7, -104.9))


def test_candidate_window_pads_appointments():
    s = make_shipment()
    start, end = candidate_window(s)
    pad = int(WINDOW_PAD_HOURS * 3600)
    assert start == s.pickup.appointment - pad
    assert end == s.dropoff.appointment + pad


def test_ping_record_requires_fields():
    with pytest.raises(SchemaError):
        ping_from_record({"truck_id": "T1", "lat": 1.0, "lon": 2.0})


def test_ping_roundtrip_and_skip_malformed(tmp_path):
    pings = [make_ping(ts=T0 + i) for i in range(3)]
    path = tmp_path / "pings.ndjson"
    save_pings(pings, path)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write("not json\n")
        fh.write(json.dumps({"truck_id": "T9", "lat": 1.0}) + "\n")
    loaded, skipped = load_pings(path)
    assert loaded == pings
    assert skipped == 2


def test_shipment_roundtrip(tmp_path):
    shipments = [make_shipment(sid=f"S{i}") for i in range(3)]
    path = tmp_path / "shipments.ndjson"
    save_shipments(shipments, path)
    assert load_shipments(path) == shipments


def test_shipment_load_rejects_malformed(tmp_path):
    path = tmp_path / "bad.ndjson"
    path.write_text('{"shipment_id": "S1"}\n', encoding="utf-8")
    with pytest.raises(SchemaError):
        load_shipments(path)


def test_fleet_index_window_is_closed_and_sorted():
    pings = [make_ping(ts=t) for t in (T0 + 30, T0, T0 + 10, T0 + 20)]
    fleet = FleetIndex(pings)
    window = fleet.window("T1", T0, T0 + 20)
    assert [p.timestamp for p in window.pings] == [T0, T0 + 10, T0 + 20]
    assert fleet.window("missing", T0, T0 + 20).pings == ()
    assert fleet.first_ping("T1").timestamp == T0


def test_window_pingset_filters_by_truck_and_time():
    pings = [make_ping(ts=T0), make_ping(truck="T2", ts=T0), make_ping(ts=T0 + 100)]
    ps = window_pingset(pings, "T1", T0, T0 + 50)
    assert [p.timestamp for p in ps.pings] == [T0]
    with pytest.raises(ValueError):
        window_pingset(pings, "T1", T0 + 10, T0)
