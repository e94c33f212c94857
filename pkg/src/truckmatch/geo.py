"""Geographic primitives: points, hexcells, distances, lane codes."""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import hexgrid
from .errors import SameCellLane

EARTH_RADIUS_KM = hexgrid.EARTH_RADIUS_KM

#: Coarse resolution used for origin/destination cities (~26 km edges).
STOP_RES = 4
#: Fine resolution used for trajectory pings (~3.7 km edges).
PING_RES = 6


@dataclass(frozen=True, slots=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError("coordinates must be finite")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} out of [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} out of [-180, 180]")


@dataclass(frozen=True, slots=True)
class HexCell:
    index: int
    resolution: int

    def __post_init__(self):
        if not hexgrid.is_valid_cell(self.index):
            raise ValueError(f"invalid cell index {self.index:#x}")
        if hexgrid.cell_resolution(self.index) != self.resolution:
            raise ValueError("stored resolution disagrees with index")

    @classmethod
    def from_index(cls, index: int) -> "HexCell":
        return cls(index, hexgrid.cell_resolution(index))

    @classmethod
    def from_string(cls, s: str) -> "HexCell":
        return cls.from_index(hexgrid.string_to_cell(s))

    def __str__(self) -> str:
        return hexgrid.cell_to_string(self.index)

    def parent(self, resolution: int) -> "HexCell":
        return HexCell(hexgrid.cell_to_parent(self.index, resolution), resolution)

    def center(self) -> GeoPoint:
        lat, lon = hexgrid.cell_to_latlng(self.index)
        return GeoPoint(lat, lon)

    def boundary(self) -> list[GeoPoint]:
        return [GeoPoint(lat, lon) for lat, lon in hexgrid.cell_to_boundary(self.index)]


@dataclass(frozen=True, slots=True)
class LaneCode:
    origin_cell: HexCell
    dest_cell: HexCell

    def __post_init__(self):
        if self.origin_cell.resolution != STOP_RES or self.dest_cell.resolution != STOP_RES:
            raise ValueError(f"lane cells must be resolution {STOP_RES}")
        if self.origin_cell == self.dest_cell:
            raise SameCellLane("origin and destination share a cell")

    def __str__(self) -> str:
        return f"{self.origin_cell}:{self.dest_cell}"

    @classmethod
    def from_string(cls, s: str) -> "LaneCode":
        origin, _, dest = s.partition(":")
        return cls(HexCell.from_string(origin), HexCell.from_string(dest))


def ping_to_hex(p: GeoPoint, res: int) -> HexCell:
    """Cell containing the point at the requested resolution."""
    return HexCell(hexgrid.latlng_to_cell(p.lat, p.lon, res), res)


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance on a 6371.0 km sphere."""
    lat1, lon1 = math.radians(a.lat), math.radians(a.lon)
    lat2, lon2 = math.radians(b.lat), math.radians(b.lon)
    s = (
        math.sin((lat2 - lat1) / 2.0) ** 2
        + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2.0) ** 2
    )
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(s)))


def lane_code(pickup: GeoPoint, dropoff: GeoPoint) -> LaneCode:
    """Lane identifier from the coarse cells of the two stops.

    Raises SameCellLane when both stops share a cell.
    """
    return LaneCode(ping_to_hex(pickup, STOP_RES), ping_to_hex(dropoff, STOP_RES))
