"""Grid path planning: 8-connected A* and single-source distance maps."""
from __future__ import annotations

import heapq
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from ..grid import SQRT2, clearance_cells, inflation_cells
from ..mapping import BevMap

Cell = Tuple[int, int]

_MOVES = ((-1, 0, 1.0), (1, 0, 1.0), (0, -1, 1.0), (0, 1, 1.0),
          (-1, -1, SQRT2), (-1, 1, SQRT2), (1, -1, SQRT2), (1, 1, SQRT2))


def path_cost(path: Sequence[Cell]) -> float:
    """Canonical cost a + b*sqrt(2) from the counts of straight and diagonal moves."""
    straight = diagonal = 0
    for (r0, c0), (r1, c1) in zip(path[:-1], path[1:]):
        if r0 != r1 and c0 != c1:
            diagonal += 1
        else:
            straight += 1
    return straight + diagonal * SQRT2


def traversable(bev: BevMap, inflation_m: float = 0.1, optimistic: bool = False) -> np.ndarray:
    """Known free cells farther than the inflation radius from any occupied cell.

    With ``optimistic`` the unknown cells count as free as well.
    """
    k = inflation_cells(inflation_m, bev.resolution)
    clear = clearance_cells(bev.occupied) > k
    known = bev.free | bev.unknown if optimistic else bev.free
    return known & clear


def astar(trav: np.ndarray, start: Cell, goal: np.ndarray,
          center: Optional[Tuple[float, float]] = None, radius: float = 0.0) -> Optional[List[Cell]]:
    """Shortest 8-connected path from ``start`` to any cell of the ``goal`` mask.

    Straight moves cost 1 and diagonal moves sqrt(2).  When every goal cell
    lies within ``radius`` of ``center`` the Euclidean distance to that disk
    guides the search; otherwise it degrades to Dijkstra.  The start cell is
    always usable even when ``trav`` excludes it.
    """
    h, w = trav.shape
    t = trav.ravel().copy()
    g_mask = goal.ravel()
    s = start[0] * w + start[1]
    t[s] = True
    if g_mask[s]:
        return [start]
    if not (g_mask & t).any():
        return None
    if center is not None:
        cr, cc = center

        def heur(i: int) -> float:
            d = math.hypot(i // w - cr, i % w - cc) - radius
            return d if d > 0 else 0.0
    else:

        def heur(i: int) -> float:
            return 0.0

    dist = {s: 0.0}
    parent = {s: -1}
    closed = set()
    counter = 0
    heap = [(heur(s), 0.0, counter, s)]
    while heap:
        _, g, _, i = heapq.heappop(heap)
        if i in closed:
            continue
        closed.add(i)
        if g_mask[i]:
            out = []
            while i >= 0:
                out.append((i // w, i % w))
                i = parent[i]
            return out[::-1]
        r, c = divmod(i, w)
        for dr, dc, step in _MOVES:
            rr, cc2 = r + dr, c + dc
            if rr < 0 or rr >= h or cc2 < 0 or cc2 >= w:
                continue
            j = rr * w + cc2
            if not t[j] or j in closed:
                continue
            ng = g + step
            if ng < dist.get(j, math.inf):
                dist[j] = ng
                parent[j] = i
                counter += 1
                heapq.heappush(heap, (ng + heur(j), ng, counter, j))
    return None


def grid_graph(trav: np.ndarray) -> csr_matrix:
    """Sparse 8-connected adjacency over traversable cells (flat indices)."""
    h, w = trav.shape
    idx = np.arange(h * w).reshape(h, w)
    rows, cols, vals = [], [], []
    for dr, dc, cost in ((0, 1, 1.0), (1, 0, 1.0), (1, 1, SQRT2), (1, -1, SQRT2)):
        r0, r1 = 0, h - dr
        c0, c1 = max(0, -dc), w - max(0, dc)
        a = trav[r0:r1, c0:c1] & trav[r0 + dr : r1 + dr, c0 + dc : c1 + dc]
        src = idx[r0:r1, c0:c1][a]
        dst = idx[r0 + dr : r1 + dr, c0 + dc : c1 + dc][a]
        rows.append(src)
        cols.append(dst)
        vals.append(np.full(src.size, cost))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    return csr_matrix((vals, (rows, cols)), shape=(h * w, h * w))


def distance_map(trav: np.ndarray, start: Cell) -> np.ndarray:
    """Path length in cells from ``start`` to every cell (inf where unreachable)."""
    t = trav.copy()
    t[start] = True
    mat = grid_graph(t)
    d = dijkstra(mat, directed=False, indices=start[0] * trav.shape[1] + start[1])
    return d.reshape(trav.shape)


def region_distance(dist: np.ndarray, region: np.ndarray) -> float:
    if not region.any():
        return math.inf
    return float(dist[region].min())
