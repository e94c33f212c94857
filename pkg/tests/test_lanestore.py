"""Lane store: accumulation, additivity-commutativity, eviction, persistence."""

import random

import pytest

from truckmatch import lanestore
from truckmatch.domain import Pingset
from truckmatch.errors import FormatError

from conftest import T0, make_shipment, straight_line_pings

DAY = 86400


def _pairs(n=12, seed=0):
    rng = random.Random(seed)
    pairs = []
    for i in range(n):
        # a handful of distinct lanes, journeys on different days
        lane = rng.randrange(3)
        start = (39.7 + lane, -104.9)
        end = (39.1 + lane, -94.6)
        t0 = T0 + rng.randrange(10) * DAY
        s = make_shipment(sid=f"S{i}", pickup=start, dropoff=end, pickup_ts=t0, drop_ts=t0 + 13 * 3600)
        ps = straight_line_pings(truck=f"T{i}", start=start, end=end, t0=t0)
        pairs.append((s, ps))
    return pairs


def _counts(store):
    out = {}
    for lane, buckets in store.buckets.items():
        for day, cells in buckets.items():
            for idx, n in cells.items():
                out[(str(lane), day, idx)] = out.get((str(lane), day, idx), 0) + n
    return out


def test_accumulation_counts_every_ping():
    pairs = _pairs()
    store = lanestore.build_lane_store(pairs)
    total = sum(_counts(store).values())
    assert total == sum(len(ps) for _, ps in pairs)


@pytest.mark.parametrize("seed", range(5))
def test_additivity_commutativity_on_random_partitions(seed):
    """Building from any partition, in any order, gives the same counts."""
    pairs = _pairs(seed=seed)
    whole = _counts(lanestore.build_lane_store(pairs))
    rng = random.Random(seed)
    shuffled = list(pairs)
    rng.shuffle(shuffled)
    cut = rng.randrange(1, len(shuffled))
    a = lanestore.build_lane_store(shuffled[:cut])
    merged = lanestore.refresh(a, shuffled[cut:], now=T0 + 400 * DAY // 10)
    assert _counts(merged) == whole


def test_refresh_evicts_expired_days():
    pairs = _pairs()
    store = lanestore.build_lane_store(pairs, window_days=5)
    assert len(store) > 0
    # all contributions fall in the first ~10 days after T0, so a refresh
    # 30 days later with a 5-day window drops everything
    later = lanestore.refresh(store, [], now=T0 + 30 * DAY)
    assert len(later) == 0


def test_refresh_does_not_mutate_input():
    pairs = _pairs()
    store = lanestore.build_lane_store(pairs)
    before = _counts(store)
    lanestore.refresh(store, pairs[:3], now=T0 + 20 * DAY)
    assert _counts(store) == before


def test_same_cell_lane_skipped_and_counted():
    s = make_shipment(pickup=(39.70, -104.90), dropoff=(39.701, -104.901))
    ps = straight_line_pings(start=(39.70, -104.90), end=(39.701, -104.901), n=5)
    store = lanestore.build_lane_store([(s, ps)])
    assert len(store) == 0
    assert store.skipped_same_cell == 1


def test_lookup_and_cell_indices():
    pairs = _pairs()
    store = lanestore.build_lane_store(pairs)
    lane = next(iter(store.buckets))
    rec = lanestore.lookup(store, lane)
    assert rec is not None
    assert sum(rec.cell_counts.values()) == sum(
        n for cells in store.buckets[lane].values() for n in cells.values()
    )
    assert {c.index for c in rec.cell_counts} == set(lanestore.lane_cell_indices(store, lane))
    assert lanestore.lookup(store, lane) is not None
    assert lanestore.lane_cell_indices(store, lane)


def test_persistence_roundtrip(tmp_path):
    store = lanestore.build_lane_store(_pairs(), window_days=77)
    path = tmp_path / "lanes.txt"
    lanestore.save(store, path)
    loaded = lanestore.load(path)
    assert loaded.window_days == 77
    assert _counts(loaded) == _counts(store)
    # saving the reload is byte-identical
    path2 = tmp_path / "lanes2.txt"
    lanestore.save(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_load_rejects_malformed(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("lane-without-fields\n", encoding="utf-8")
    with pytest.raises(FormatError):
        lanestore.load(path)
    path.write_text("# truckmatch-lanes v1 window_days=zap\n", encoding="utf-8")
    with pytest.raises(FormatError):
        lanestore.load(path)


def test_empty_pingset_contributes_nothing():
    s = make_shipment()
    store = lanestore.build_lane_store([(s, Pingset("T1"))])
    assert len(store) == 0
