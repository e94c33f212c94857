"""Map-viewer export: truck trajectories and hexcell boundary polygons.

Produces one GeoJSON FeatureCollection per layer so a standard map viewer
can style them independently:

* ``trajectory`` — the truck's pings as a LineString (plus Point features
  for the stops when a shipment is supplied);
* ``lane_cells`` — boundary polygons of the lane's historical fine cells;
* ``truck_cells`` — boundary polygons of the cells the truck pinged in;
* ``overlap_cells`` — the intersection of the two.

All coordinates follow the GeoJSON convention of [lon, lat].
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Optional

from . import hexgrid
from .domain import Pingset, Shipment
from .geo import LaneCode
from .lanestore import LaneStore, lane_cell_indices, pingset_cells

LAYERS = ("trajectory", "lane_cells", "truck_cells", "overlap_cells")


def _cell_polygon(index: int) -> dict:
    ring = [[lon, lat] for lat, lon in hexgrid.cell_to_boundary(index)]
    ring.append(ring[0])  # GeoJSON rings are closed
    return {
        "type": "Feature",
        "geometry": {"type": "Polygon", "coordinates": [ring]},
        "properties": {
            "cell": hexgrid.cell_to_string(index),
            "resolution": hexgrid.cell_resolution(index),
        },
    }


def _collection(features: Iterable[dict], layer: str) -> dict:
    return {
        "type": "FeatureCollection",
        "features": list(features),
        "properties": {"layer": layer},
    }


def cells_layer(indices: Iterable[int], layer: str) -> dict:
    """Boundary polygons for a set of cell indices, sorted for stable output."""
    ordered = sorted(set(indices), key=hexgrid.cell_to_string)
    return _collection((_cell_polygon(i) for i in ordered), layer)


def trajectory_layer(pingset: Pingset, shipment: Optional[Shipment] = None) -> dict:
    features = []
    if pingset.pings:
        features.append(
            {
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": [
                        [p.position.lon, p.position.lat] for p in pingset.pings
                    ],
                },
                "properties": {
                    "truck_id": pingset.truck_id,
                    "n_pings": len(pingset),
                    "start_utc": pingset.pings[0].timestamp,
                    "end_utc": pingset.pings[-1].timestamp,
                },
            }
        )
    if shipment is not None:
        for role, stop in (("pickup", shipment.pickup), ("dropoff", shipment.dropoff)):
            features.append(
                {
                    "type": "Feature",
                    "geometry": {
                        "type": "Point",
                        "coordinates": [stop.location.lon, stop.location.lat],
                    },
                    "properties": {
                        "shipment_id": shipment.shipment_id,
                        "stop": role,
                        "appointment_utc": stop.appointment,
                    },
                }
            )
    return _collection(features, "trajectory")


def export_layers(
    pingset: Pingset,
    lane: LaneCode,
    store: LaneStore,
    shipment: Optional[Shipment] = None,
) -> dict[str, dict]:
    """All four layers for one truck against one lane."""
    lane_cells = lane_cell_indices(store, lane)
    truck_cells = {c.index for c in pingset_cells(pingset)}
    return {
        "trajectory": trajectory_layer(pingset, shipment),
        "lane_cells": cells_layer(lane_cells, "lane_cells"),
        "truck_cells": cells_layer(truck_cells, "truck_cells"),
        "overlap_cells": cells_layer(lane_cells & truck_cells, "overlap_cells"),
    }


def write_layers(layers: dict[str, dict], out_dir: str | Path) -> list[Path]:
    """One ``<layer>.geojson`` file per layer; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in LAYERS:
        if name not in layers:
            continue
        path = out / f"{name}.geojson"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(layers[name], fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")
        paths.append(path)
    return paths
