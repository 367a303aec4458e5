"""Small grid helpers shared by the simulator, mapper and planners."""
from __future__ import annotations

import math
from typing import Iterator, Optional, Tuple

import numpy as np
from scipy import ndimage

Cell = Tuple[int, int]

NEIGHBORS4 = ((-1, 0), (1, 0), (0, -1), (0, 1))
NEIGHBORS8 = ((-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1))
SQRT2 = math.sqrt(2.0)

STRUCT4 = ndimage.generate_binary_structure(2, 1)
STRUCT8 = ndimage.generate_binary_structure(2, 2)


def in_bounds(shape: Tuple[int, int], r: int, c: int) -> bool:
    return 0 <= r < shape[0] and 0 <= c < shape[1]


def neighbors8(shape: Tuple[int, int], r: int, c: int) -> Iterator[Tuple[int, int, float]]:
    h, w = shape
    for dr, dc in NEIGHBORS8:
        rr, cc = r + dr, c + dc
        if 0 <= rr < h and 0 <= cc < w:
            yield rr, cc, (SQRT2 if dr and dc else 1.0)


def clearance_cells(occupied: np.ndarray) -> np.ndarray:
    """Euclidean distance (cells) from every cell to the nearest occupied cell."""
    if not occupied.any():
        return np.full(occupied.shape, float(np.hypot(*occupied.shape)))
    return ndimage.distance_transform_edt(~occupied)


def inflate(occupied: np.ndarray, radius_cells: int) -> np.ndarray:
    """Cells within ``radius_cells`` of an occupied cell (occupied cells included)."""
    return clearance_cells(occupied) <= radius_cells


def inflation_cells(inflation_m: float, resolution: float) -> int:
    # ceiling with a guard against float noise (0.1/0.075 -> 2)
    return int(math.ceil(inflation_m / resolution - 1e-9))


def disk_offsets(radius_cells: float) -> np.ndarray:
    """Integer offsets (dr, dc) with Euclidean norm <= radius."""
    r = int(math.floor(radius_cells))
    dr, dc = np.mgrid[-r : r + 1, -r : r + 1]
    keep = dr * dr + dc * dc <= radius_cells * radius_cells + 1e-9
    return np.stack([dr[keep], dc[keep]], axis=1)


def cells_within(shape: Tuple[int, int], center: Tuple[float, float], radius_cells: float) -> np.ndarray:
    """Boolean mask of cells whose centers lie within ``radius_cells`` of ``center``."""
    rows, cols = np.ogrid[: shape[0], : shape[1]]
    return (rows - center[0]) ** 2 + (cols - center[1]) ** 2 <= radius_cells**2 + 1e-9


def line_of_sight(occupied: np.ndarray, a: Tuple[int, int], b: Tuple[int, int]) -> bool:
    """Bresenham line from a to b with no occupied cell strictly between them."""
    r0, c0 = a
    r1, c1 = b
    dr, dc = abs(r1 - r0), abs(c1 - c0)
    sr = 1 if r1 > r0 else -1
    sc = 1 if c1 > c0 else -1
    err = dc - dr
    r, c = r0, c0
    while (r, c) != (r1, c1):
        e2 = 2 * err
        if e2 > -dr:
            err -= dr
            c += sc
        if e2 < dc:
            err += dc
            r += sr
        if (r, c) != (r1, c1) and occupied[r, c]:
            return False
    return True


def visible_region(occupied: np.ndarray, candidates: np.ndarray, target: Tuple[float, float],
                   own: Optional[np.ndarray] = None) -> np.ndarray:
    """Candidate cells with a clear line to ``target``.

    ``own`` marks the target's own footprint, which does not block the view.
    """
    occ = occupied & ~own if own is not None else occupied
    tr, tc = int(round(target[0])), int(round(target[1]))
    out = np.zeros_like(candidates)
    for r, c in zip(*np.nonzero(candidates)):
        if line_of_sight(occ, (int(r), int(c)), (tr, tc)):
            out[r, c] = True
    return out
