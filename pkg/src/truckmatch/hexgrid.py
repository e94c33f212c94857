"""Hierarchical hexagonal cell index.

A 16-resolution aperture-7 hexagon hierarchy over an equal-area cylindrical
projection of the globe. Cell identifiers are 60-bit integers serialized as
15 lowercase hex characters. Resolution 0 cells have ~1281 km edges; each
finer resolution shrinks edges by sqrt(7), giving ~26 km at resolution 4 and
~3.7 km at resolution 6.

The hierarchy is exact by construction: a point is located at the finest
resolution (15) and coarser cells are derived by digit truncation, so the
parent of a point's res-(r+1) cell always equals the point's res-r cell.
Digit arithmetic uses Eisenstein integers (the hex lattice is Z[w] with
w = exp(2*pi*i/3)); one resolution step multiplies by u = 3 + w, |u|^2 = 7,
which rotates the lattice by ~19.1 degrees and scales it by sqrt(7).

Identifiers are structurally similar to other 64-bit hexagonal indexes
(mode nibble, resolution nibble, base cell, 3-bit digit per level, unused
digits filled with 7) but are not interchangeable with any external scheme.
"""

from __future__ import annotations

import math

EARTH_RADIUS_KM = 6371.0

# Projection: Lambert cylindrical equal-area, standard parallel 37N
# (true scale across the mid-latitudes where the simulator operates).
_PHI0_COS = math.cos(math.radians(37.0))

# Nominal res-0 hexagon edge length, km. Divide by sqrt(7) per resolution.
BASE_EDGE_KM = 1281.256011

MAX_RES = 15

_SQRT3 = math.sqrt(3.0)
# Center spacing of the res-15 lattice, km.
_D15 = _SQRT3 * BASE_EDGE_KM / 7.0 ** (MAX_RES / 2.0)

# Eisenstein unit vectors for the 7 aperture digits, as (a, b) with
# value a + b*w. Digit 0 is the central child.
_DIGIT_VEC = ((0, 0), (1, 0), (1, 1), (0, 1), (-1, 0), (-1, -1), (0, -1))
# Residue class of a + b*w modulo u is (a + 4b) mod 7; map class -> digit.
_CLASS_TO_DIGIT = {0: 0, 1: 1, 5: 2, 4: 3, 6: 4, 2: 5, 3: 6}

# id bit layout (bits 60..63 always zero -> 15 hex chars):
#   bits 57-59  mode (always 1)
#   bits 53-56  resolution 0..15
#   bits 45-52  base cell
#   bits 0-44   per-level digits, level 1 highest; unused levels hold 7
_MODE_SHIFT = 57
_RES_SHIFT = 53
_BASE_SHIFT = 45
_MODE = 1


def _project(lat: float, lon: float) -> tuple[float, float]:
    x = EARTH_RADIUS_KM * math.radians(lon) * _PHI0_COS
    y = EARTH_RADIUS_KM * math.sin(math.radians(lat)) / _PHI0_COS
    return x, y


def _unproject(x: float, y: float) -> tuple[float, float]:
    lon = math.degrees(x / (EARTH_RADIUS_KM * _PHI0_COS))
    s = max(-1.0, min(1.0, y * _PHI0_COS / EARTH_RADIUS_KM))
    return math.degrees(math.asin(s)), lon


def _axial_to_xy(a: float, b: float, spacing: float) -> tuple[float, float]:
    # position of a + b*w, w = (-1/2, sqrt(3)/2)
    return spacing * (a - 0.5 * b), spacing * (_SQRT3 / 2.0 * b)


def _nearest_axial(x: float, y: float, spacing: float) -> tuple[int, int]:
    # cube rounding: basis vectors 1 and w sit at 120 degrees, the
    # standard axial configuration
    bf = y / spacing / (_SQRT3 / 2.0)
    af = x / spacing + 0.5 * bf
    cf = -af - bf
    ra, rb, rc = round(af), round(bf), round(cf)
    if ra + rb + rc != 0:
        da, db, dc = abs(ra - af), abs(rb - bf), abs(rc - cf)
        if da >= db and da >= dc:
            ra = -rb - rc
        elif db >= dc:
            rb = -ra - rc
    return ra, rb


def _mul_u(a: int, b: int) -> tuple[int, int]:
    # (a + b*w) * (3 + w)
    return 3 * a - b, a + 2 * b


def _div_u(a: int, b: int) -> tuple[int, int, int]:
    """Split a + b*w into (parent, digit): z = parent*u + digit vector."""
    digit = _CLASS_TO_DIGIT[(a + 4 * b) % 7]
    ea, eb = _DIGIT_VEC[digit]
    da, db = a - ea, b - eb
    # multiply by conj-like cofactor (2 - w), divide by norm 7; exact
    return (2 * da + db) // 7, (3 * db - da) // 7, digit


def _base_table() -> tuple[dict[tuple[int, int], int], list[tuple[int, int]]]:
    # Enumerate every res-0 cell whose center falls within one spacing of
    # the projected world rectangle. Order is fixed (b, then a) so base
    # cell numbering is stable across runs and processes.
    d0 = _D15 * 7.0 ** (MAX_RES / 2.0)
    theta0 = MAX_RES * math.atan2(_SQRT3 / 2.0, 2.5)  # arg(u) per level
    half_x = math.pi * EARTH_RADIUS_KM * _PHI0_COS + d0
    half_y = EARTH_RADIUS_KM / _PHI0_COS + d0
    cos_t, sin_t = math.cos(theta0), math.sin(theta0)
    cells = []
    for b in range(-24, 25):
        for a in range(-24, 25):
            px, py = _axial_to_xy(a, b, d0)
            x = px * cos_t - py * sin_t
            y = px * sin_t + py * cos_t
            if abs(x) <= half_x and abs(y) <= half_y:
                cells.append((a, b))
    if len(cells) > 256:
        raise AssertionError("base cell table exceeds 8-bit capacity")
    return {ab: i for i, ab in enumerate(cells)}, cells


_BASE_INDEX, _BASE_CELLS = _base_table()

# The res-15 lattice has orientation 0 in projected coordinates; each
# coarser lattice is rotated by arg(u) and scaled by sqrt(7).
_ARG_U = math.atan2(_SQRT3 / 2.0, 2.5)


def latlng_to_cell(lat: float, lon: float, res: int) -> int:
    """Index the point at the given resolution (0..15)."""
    if not 0 <= res <= MAX_RES:
        raise ValueError(f"resolution must be in [0, {MAX_RES}], got {res}")
    x, y = _project(lat, lon)
    a, b = _nearest_axial(x, y, _D15)
    digits = [7] * (MAX_RES + 1)  # 1-indexed by level
    for level in range(MAX_RES, 0, -1):
        a, b, digits[level] = _div_u(a, b)
    try:
        base = _BASE_INDEX[(a, b)]
    except KeyError:  # pragma: no cover - world rectangle margin exceeded
        raise ValueError(f"point ({lat}, {lon}) outside indexable domain")
    cell = (_MODE << _MODE_SHIFT) | (res << _RES_SHIFT) | (base << _BASE_SHIFT)
    for level in range(1, MAX_RES + 1):
        d = digits[level] if level <= res else 7
        cell |= d << (3 * (MAX_RES - level))
    return cell


def latlng_to_cells(lats, lons, res: int):
    """Vectorized point indexing; returns an int64 numpy array of cell ids."""
    import numpy as np

    if not 0 <= res <= MAX_RES:
        raise ValueError(f"resolution must be in [0, {MAX_RES}], got {res}")
    lats = np.asarray(lats, dtype=np.float64)
    lons = np.asarray(lons, dtype=np.float64)
    x = EARTH_RADIUS_KM * np.radians(lons) * _PHI0_COS
    y = EARTH_RADIUS_KM * np.sin(np.radians(lats)) / _PHI0_COS
    bf = y / _D15 / (_SQRT3 / 2.0)
    af = x / _D15 + 0.5 * bf
    cf = -af - bf
    ra = np.rint(af)
    rb = np.rint(bf)
    rc = np.rint(cf)
    da, db, dc = np.abs(ra - af), np.abs(rb - bf), np.abs(rc - cf)
    fix_a = (ra + rb + rc != 0) & (da >= db) & (da >= dc)
    fix_b = (ra + rb + rc != 0) & ~fix_a & (db >= dc)
    ra = np.where(fix_a, -rb - rc, ra)
    rb = np.where(fix_b, -ra - rc, rb)
    a = ra.astype(np.int64)
    b = rb.astype(np.int64)

    digit_of_class = np.empty(7, dtype=np.int64)
    for cls, d in _CLASS_TO_DIGIT.items():
        digit_of_class[cls] = d
    vec_a = np.array([v[0] for v in _DIGIT_VEC], dtype=np.int64)
    vec_b = np.array([v[1] for v in _DIGIT_VEC], dtype=np.int64)

    cell = np.full(a.shape, (_MODE << _MODE_SHIFT) | (res << _RES_SHIFT), dtype=np.int64)
    for level in range(MAX_RES, 0, -1):
        digit = digit_of_class[(a + 4 * b) % 7]
        da_, db_ = a - vec_a[digit], b - vec_b[digit]
        a = (2 * da_ + db_) // 7
        b = (3 * db_ - da_) // 7
        cell |= np.where(level <= res, digit, 7) << (3 * (MAX_RES - level))

    base_lut = np.full(64 * 64, -1, dtype=np.int64)
    for (ba, bb), idx in _BASE_INDEX.items():
        base_lut[(ba + 32) * 64 + (bb + 32)] = idx
    base = base_lut[(a + 32) * 64 + (b + 32)]
    if np.any(base < 0):
        raise ValueError("point outside indexable domain")
    cell |= base << _BASE_SHIFT
    return cell


def cell_resolution(cell: int) -> int:
    return (cell >> _RES_SHIFT) & 0xF


def _cell_digit(cell: int, level: int) -> int:
    return (cell >> (3 * (MAX_RES - level))) & 0x7


def is_valid_cell(cell: int) -> bool:
    if cell < 0 or cell >> 60:
        return False
    if (cell >> _MODE_SHIFT) & 0x7 != _MODE:
        return False
    res = cell_resolution(cell)
    base = (cell >> _BASE_SHIFT) & 0xFF
    if base >= len(_BASE_CELLS):
        return False
    for level in range(1, MAX_RES + 1):
        d = _cell_digit(cell, level)
        if level <= res:
            if d > 6:
                return False
        elif d != 7:
            return False
    return True


def cell_to_parent(cell: int, parent_res: int) -> int:
    res = cell_resolution(cell)
    if parent_res > res:
        raise ValueError(f"parent resolution {parent_res} finer than cell ({res})")
    out = cell & ~(0xF << _RES_SHIFT)
    out |= parent_res << _RES_SHIFT
    for level in range(parent_res + 1, MAX_RES + 1):
        out |= 0x7 << (3 * (MAX_RES - level))
    return out


def _cell_axial(cell: int) -> tuple[int, int, int]:
    """Axial coordinates of the cell center in res-15 lattice units."""
    res = cell_resolution(cell)
    base = (cell >> _BASE_SHIFT) & 0xFF
    a, b = _BASE_CELLS[base]
    for level in range(1, res + 1):
        a, b = _mul_u(a, b)
        ea, eb = _DIGIT_VEC[_cell_digit(cell, level)]
        a, b = a + ea, b + eb
    for _ in range(MAX_RES - res):  # central-child padding down to res 15
        a, b = _mul_u(a, b)
    return a, b, res


def cell_to_latlng(cell: int) -> tuple[float, float]:
    a, b, _ = _cell_axial(cell)
    x, y = _axial_to_xy(a, b, _D15)
    return _unproject(x, y)


def cell_to_boundary(cell: int) -> list[tuple[float, float]]:
    """Nominal hexagon vertices (lat, lon), counterclockwise."""
    a, b, res = _cell_axial(cell)
    cx, cy = _axial_to_xy(a, b, _D15)
    spacing = _D15 * 7.0 ** ((MAX_RES - res) / 2.0)
    radius = spacing / _SQRT3
    theta = (MAX_RES - res) * _ARG_U
    verts = []
    for k in range(6):
        ang = theta + math.radians(30.0 + 60.0 * k)
        verts.append(_unproject(cx + radius * math.cos(ang), cy + radius * math.sin(ang)))
    return verts


def edge_length_km(res: int) -> float:
    """Nominal cell edge length at a resolution."""
    return BASE_EDGE_KM / 7.0 ** (res / 2.0)


def cell_to_string(cell: int) -> str:
    return format(cell, "015x")


def string_to_cell(s: str) -> int:
    if len(s) != 15:
        raise ValueError(f"cell string must be 15 hex chars, got {s!r}")
    return int(s, 16)
