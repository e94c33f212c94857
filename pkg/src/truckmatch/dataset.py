"""Training-data construction: positive windowed snapshots of true
journeys, negatives from decoy trucks bound for other destinations.

Both classes are snapshotted at the same ping counts so the model learns
to rank partial journeys. The file format is CSV:

    shipment_id,truck_id,label,hours_since_pickup,dist_to_dest_km,overlap_cells,pings_in_overlap
"""

from __future__ import annotations

import csv
import random
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .domain import Pingset, Shipment
from .errors import FormatError, InsufficientDecoysWarning
from .features import FeatureVector, extract_features
from .gbdt import TrainRow
from .geo import STOP_RES, ping_to_hex
from .lanestore import LaneStore

DEFAULT_SNAPSHOT_COUNTS = (20, 25, 30, 40, 60, 90)
#: negatives per positive reproducing the intentional class skew
NEGATIVE_RATIO = 350.0 / 150.0
MIN_ALTERNATIVE_DESTINATIONS = 5
#: trucks finishing this close to the shipment's destination are too
#: ambiguous to auto-label as negatives (same-metro deliveries)
NEAR_DEST_EXCLUSION_KM = 50.0

HEADER = (
    "shipment_id",
    "truck_id",
    "label",
    "hours_since_pickup",
    "dist_to_dest_km",
    "overlap_cells",
    "pings_in_overlap",
)


@dataclass(frozen=True)
class SnapshotSpec:
    ping_counts: tuple[int, ...] = DEFAULT_SNAPSHOT_COUNTS

    def __post_init__(self):
        counts = tuple(self.ping_counts)
        object.__setattr__(self, "ping_counts", counts)
        if not counts or any(c < 1 for c in counts):
            raise ValueError("snapshot counts must be positive")
        if any(a >= b for a, b in zip(counts, counts[1:])):
            raise ValueError("snapshot counts must be strictly ascending")


@dataclass(frozen=True, slots=True)
class DatasetRow:
    shipment_id: str
    truck_id: str
    label: int
    features: FeatureVector

    def to_train_row(self) -> TrainRow:
        return TrainRow(features=self.features, label=self.label, group=self.shipment_id)


def _snapshot_rows(
    s: Shipment,
    pingset: Pingset,
    store: LaneStore,
    spec: SnapshotSpec,
    label: int,
) -> list[DatasetRow]:
    rows = []
    for count in spec.ping_counts:
        if count > len(pingset):
            break
        features = extract_features(s, pingset.prefix(count), store)
        if label == 0 and features.dist_to_dest_km < NEAR_DEST_EXCLUSION_KM:
            # a non-delivering truck this close to the destination is too
            # ambiguous to auto-label
            continue
        rows.append(
            DatasetRow(
                shipment_id=s.shipment_id,
                truck_id=pingset.truck_id,
                label=label,
                features=features,
            )
        )
    return rows


def make_positive_rows(
    s: Shipment,
    true_pingset: Pingset,
    store: LaneStore,
    spec: SnapshotSpec = SnapshotSpec(),
) -> list[DatasetRow]:
    """Label-1 snapshot rows from the ground-truth truck's journey."""
    return _snapshot_rows(s, true_pingset, store, spec, label=1)


def make_negative_rows(
    s: Shipment,
    decoys: Sequence[Pingset],
    store: LaneStore,
    spec: SnapshotSpec = SnapshotSpec(),
) -> list[DatasetRow]:
    """Label-0 snapshot rows from decoy trucks.

    Each decoy must terminate outside the shipment's destination cell; a
    decoy that reaches the destination is a mislabeled positive and is
    rejected. Individual snapshots taken within NEAR_DEST_EXCLUSION_KM of
    the destination are skipped as too ambiguous to auto-label. Emits
    InsufficientDecoysWarning when fewer than five distinct alternative
    destination cells are represented.
    """
    dest_cell = ping_to_hex(s.dropoff.location, STOP_RES)
    rows: list[DatasetRow] = []
    decoy_dest_cells = set()
    for decoy in decoys:
        if len(decoy) == 0:
            continue
        final_cell = ping_to_hex(decoy.latest().position, STOP_RES)
        if final_cell == dest_cell:
            raise ValueError(
                f"decoy {decoy.truck_id} ends in the shipment's destination cell"
            )
        decoy_dest_cells.add(final_cell)
        rows.extend(_snapshot_rows(s, decoy, store, spec, label=0))
    if decoys and len(decoy_dest_cells) < MIN_ALTERNATIVE_DESTINATIONS:
        warnings.warn(
            f"shipment {s.shipment_id}: only {len(decoy_dest_cells)} alternative "
            f"destinations among decoys",
            InsufficientDecoysWarning,
        )
    return rows


def balance_negatives(
    rows: Sequence[DatasetRow],
    ratio: float = NEGATIVE_RATIO,
    seed: int = 0,
) -> list[DatasetRow]:
    """Deterministically subsample negatives to ~ratio per positive,
    preserving row order."""
    n_pos = sum(1 for r in rows if r.label == 1)
    negatives = [i for i, r in enumerate(rows) if r.label == 0]
    target = int(round(n_pos * ratio))
    if len(negatives) <= target:
        return list(rows)
    keep = set(random.Random(seed).sample(negatives, target))
    return [r for i, r in enumerate(rows) if r.label == 1 or i in keep]


def grouped_split(
    rows: Sequence[DatasetRow],
    valid_fraction: float = 0.2,
    seed: int = 0,
) -> tuple[list[DatasetRow], list[DatasetRow]]:
    """Split by shipment so no shipment straddles the folds."""
    if not 0.0 < valid_fraction < 1.0:
        raise ValueError("valid_fraction must be in (0, 1)")
    groups = sorted({r.shipment_id for r in rows})
    rng = random.Random(seed)
    rng.shuffle(groups)
    n_valid = max(1, int(round(len(groups) * valid_fraction)))
    valid_groups = set(groups[:n_valid])
    train = [r for r in rows if r.shipment_id not in valid_groups]
    valid = [r for r in rows if r.shipment_id in valid_groups]
    return train, valid


def class_counts(rows: Iterable[DatasetRow]) -> tuple[int, int]:
    pos = neg = 0
    for r in rows:
        if r.label == 1:
            pos += 1
        else:
            neg += 1
    return pos, neg


def write_dataset(rows: Iterable[DatasetRow], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HEADER)
        for r in rows:
            f = r.features
            writer.writerow(
                [
                    r.shipment_id,
                    r.truck_id,
                    r.label,
                    repr(f.hours_since_pickup),
                    repr(f.dist_to_dest_km),
                    f.overlap_cells,
                    f.pings_in_overlap,
                ]
            )


def read_dataset(path: str | Path) -> list[DatasetRow]:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty dataset file")
        if tuple(header) != HEADER:
            raise FormatError(f"{path}: unexpected header {header}")
        for lineno, rec in enumerate(reader, 2):
            if len(rec) != len(HEADER):
                raise FormatError(f"{path}:{lineno}: expected {len(HEADER)} fields")
            try:
                rows.append(
                    DatasetRow(
                        shipment_id=rec[0],
                        truck_id=rec[1],
                        label=int(rec[2]),
                        features=FeatureVector(
                            float(rec[3]), float(rec[4]), int(rec[5]), int(rec[6])
                        ),
                    )
                )
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return rows
