"""Historical lane mapping: lane code -> multiset of fine hexcells.

Contributions are bucketed per (lane, UTC day) so a rolling window can
evict expired days without replaying history. Persistence is one line per
(lane, day bucket):

    <origin_cell_hex>:<dest_cell_hex> <YYYY-MM-DD> <cell_hex>=<count> ...

Lines starting with '#' are metadata comments and may be ignored by other
readers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Optional

from . import hexgrid
from .domain import Pingset, Shipment
from .errors import FormatError, SameCellLane
from .geo import PING_RES, HexCell, LaneCode, lane_code

DEFAULT_WINDOW_DAYS = 365

# buckets: day -> cell index -> ping count
LaneBuckets = dict[date, dict[int, int]]


@dataclass(frozen=True)
class LaneRecord:
    lane: LaneCode
    cell_counts: dict[HexCell, int]
    last_updated: int  # UTC epoch seconds (end of newest contribution day)


@dataclass
class LaneStore:
    buckets: dict[LaneCode, LaneBuckets] = field(default_factory=dict)
    window_days: int = DEFAULT_WINDOW_DAYS
    skipped_same_cell: int = 0

    def __post_init__(self):
        if self.window_days <= 0:
            raise ValueError("window_days must be positive")

    def __len__(self) -> int:
        return len(self.buckets)


def pingset_cells(pingset: Pingset, res: int = PING_RES) -> list[HexCell]:
    """Fine cell of each ping, in ping order."""
    if not pingset.pings:
        return []
    ids = hexgrid.latlng_to_cells(
        [p.position.lat for p in pingset.pings],
        [p.position.lon for p in pingset.pings],
        res,
    )
    return [HexCell(int(i), res) for i in ids]


def _ping_day(ts: int) -> date:
    return datetime.fromtimestamp(ts, tz=timezone.utc).date()


def _accumulate(store: LaneStore, completed: Iterable[tuple[Shipment, Pingset]]) -> None:
    for shipment, pingset in completed:
        try:
            lane = lane_code(shipment.pickup.location, shipment.dropoff.location)
        except SameCellLane:
            store.skipped_same_cell += 1
            continue
        cells = pingset_cells(pingset)
        if not cells:
            continue
        lane_buckets = store.buckets.setdefault(lane, {})
        for ping, cell in zip(pingset.pings, cells):
            day = lane_buckets.setdefault(_ping_day(ping.timestamp), {})
            day[cell.index] = day.get(cell.index, 0) + 1


def build_lane_store(
    completed: Iterable[tuple[Shipment, Pingset]],
    window_days: int = DEFAULT_WINDOW_DAYS,
) -> LaneStore:
    """Accumulate fine-cell ping counts per lane from ground-truth pairs."""
    store = LaneStore(window_days=window_days)
    _accumulate(store, completed)
    return store


def refresh(
    store: LaneStore,
    new: Iterable[tuple[Shipment, Pingset]],
    now: int,
) -> LaneStore:
    """New store with fresh contributions added and expired days evicted.

    The input store is left untouched; callers swap the result in place of
    the old snapshot.
    """
    cutoff = _ping_day(now) - timedelta(days=store.window_days)
    out = LaneStore(window_days=store.window_days, skipped_same_cell=store.skipped_same_cell)
    for lane, lane_buckets in store.buckets.items():
        kept = {d: dict(cells) for d, cells in lane_buckets.items() if d >= cutoff}
        if kept:
            out.buckets[lane] = kept
    _accumulate(out, new)
    # contributions in `new` may themselves predate the window
    for lane in list(out.buckets):
        out.buckets[lane] = {d: c for d, c in out.buckets[lane].items() if d >= cutoff}
        if not out.buckets[lane]:
            del out.buckets[lane]
    return out


def lookup(store: LaneStore, lane: LaneCode) -> Optional[LaneRecord]:
    lane_buckets = store.buckets.get(lane)
    if not lane_buckets:
        return None
    counts: dict[int, int] = {}
    for cells in lane_buckets.values():
        for idx, n in cells.items():
            counts[idx] = counts.get(idx, 0) + n
    newest = max(lane_buckets)
    last_updated = int(
        datetime(newest.year, newest.month, newest.day, tzinfo=timezone.utc).timestamp()
        + 86400
        - 1
    )
    return LaneRecord(
        lane=lane,
        cell_counts={HexCell(idx, PING_RES): n for idx, n in counts.items()},
        last_updated=last_updated,
    )


def lane_cell_indices(store: LaneStore, lane: LaneCode) -> frozenset[int]:
    """Raw cell-index set for a lane; empty when the lane is unknown."""
    lane_buckets = store.buckets.get(lane)
    if not lane_buckets:
        return frozenset()
    out: set[int] = set()
    for cells in lane_buckets.values():
        out.update(cells)
    return frozenset(out)


def save(store: LaneStore, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# truckmatch-lanes v1 window_days={store.window_days}\n")
        for lane in sorted(store.buckets, key=str):
            for day in sorted(store.buckets[lane]):
                cells = store.buckets[lane][day]
                parts = [
                    f"{hexgrid.cell_to_string(idx)}={cells[idx]}"
                    for idx in sorted(cells, key=hexgrid.cell_to_string)
                ]
                fh.write(f"{lane} {day.isoformat()} {' '.join(parts)}\n")


def load(path: str | Path, window_days: int = DEFAULT_WINDOW_DAYS) -> LaneStore:
    store = LaneStore(window_days=window_days)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                if "window_days=" in line:
                    try:
                        store.window_days = int(line.split("window_days=")[1].split()[0])
                    except (ValueError, IndexError):
                        raise FormatError(f"{path}:{lineno}: bad window_days header")
                continue
            parts = line.split(" ")
            if len(parts) < 3:
                raise FormatError(f"{path}:{lineno}: expected lane, day and cells")
            try:
                lane = LaneCode.from_string(parts[0])
                day = date.fromisoformat(parts[1])
                cells: dict[int, int] = {}
                for token in parts[2:]:
                    cell_s, _, count_s = token.partition("=")
                    count = int(count_s)
                    if count < 1:
                        raise ValueError("count must be >= 1")
                    cells[hexgrid.string_to_cell(cell_s)] = count
            except (ValueError, SameCellLane) as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            store.buckets.setdefault(lane, {})[day] = cells
    return store
