import pytest

from truckmatch.domain import Ping, Pingset, Shipment, Stop
from truckmatch.geo import GeoPoint

T0 = 1_700_000_000


def make_ping(truck="T1", lat=39.7, lon=-104.9, ts=T0):
    return Ping(truck_id=truck, position=GeoPoint(lat, lon), timestamp=ts)


def make_shipment(
    sid="S1",
    pickup=(39.7392, -104.9903),
    dropoff=(39.0997, -94.5786),
    pickup_ts=T0,
    drop_ts=T0 + 13 * 3600,
    carrier="",
):
    return Shipment(
        shipment_id=sid,
        pickup=Stop(GeoPoint(*pickup), pickup_ts),
        dropoff=Stop(GeoPoint(*dropoff), drop_ts),
        carrier_id=carrier,
    )


def straight_line_pings(
    truck="T1",
    start=(39.7392, -104.9903),
    end=(39.0997, -94.5786),
    n=40,
    t0=T0,
    interval_s=300,
):
    """Pings interpolated on the lat/lon segment from start to end."""
    pings = []
    for i in range(n):
        f = i / max(1, n - 1)
        lat = start[0] + f * (end[0] - start[0])
        lon = start[1] + f * (end[1] - start[1])
        pings.append(Ping(truck_id=truck, position=GeoPoint(lat, lon), timestamp=t0 + i * interval_s))
    return Pingset(truck, pings)


@pytest.fixture
def shipment():
    return make_shipment()


@pytest.fixture
def journey():
    return straight_line_pings()
