"""Navigational skeleton: distance field, generalized Voronoi diagram, sparse graph."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from scipy import ndimage
from skimage.morphology import skeletonize

from .grid import STRUCT8
from .mapping import BevMap
from .world.model import Cell

MIN_CLEARANCE_CELLS = 2.0
DOOR_PRESERVE_CELLS = 2.0


class SkeletonError(ValueError):
    """The map has no free space wide enough to skeletonize."""


@dataclass
class DistanceField:
    clearance: np.ndarray  # cells, 0 on obstacles
    nearest: Optional[np.ndarray]  # (2, H, W) nearest obstacle cell, None if no obstacles
    resolution: float

    @property
    def meters(self) -> np.ndarray:
        return self.clearance * self.resolution

    @property
    def shape(self) -> Tuple[int, int]:
        return self.clearance.shape


def compute_esdf(bev: BevMap) -> DistanceField:
    """Exact Euclidean distance from every cell to the nearest non-free cell.

    Unknown space counts as obstacle.  With no obstacle at all every value is
    clamped to the grid diagonal.
    """
    free = bev.free
    if free.all():
        diag = float(math.hypot(*free.shape))
        return DistanceField(np.full(free.shape, diag), None, bev.resolution)
    if not free.any():
        return DistanceField(np.zeros(free.shape), np.indices(free.shape), bev.resolution)
    dist, idx = ndimage.distance_transform_edt(free, return_indices=True)
    return DistanceField(dist, idx, bev.resolution)


def extract_gvd(df: DistanceField, free: np.ndarray, min_clearance: float = MIN_CLEARANCE_CELLS) -> np.ndarray:
    """Boolean mask of skeleton cells.

    Two 4-neighbouring free cells whose nearest obstacle cells are not
    adjacent straddle a basin boundary; of the pair, the cell closer to being
    equidistant is kept (it is within one cell of both obstacles).  Cells
    with clearance below ``min_clearance`` are dropped, then the result is
    thinned to one-cell width.
    """
    h, w = df.shape
    mask = np.zeros((h, w), dtype=bool)
    if df.nearest is None:
        return mask
    fr, fc = df.nearest
    d = df.clearance
    for dr, dc in ((0, 1), (1, 0)):
        a = (slice(0, h - dr), slice(0, w - dc))
        b = (slice(dr, h), slice(dc, w))
        both = free[a] & free[b]
        distinct = (np.abs(fr[a] - fr[b]) > 1) | (np.abs(fc[a] - fc[b]) > 1)
        pair = both & distinct
        if not pair.any():
            continue
        ra, ca = np.nonzero(pair)
        rb, cb = ra + dr, ca + dc
        # gap: how much farther the other basin is than the own one
        gap_a = np.hypot(ra - fr[rb, cb], ca - fc[rb, cb]) - d[ra, ca]
        gap_b = np.hypot(rb - fr[ra, ca], cb - fc[ra, ca]) - d[rb, cb]
        take_a = gap_a <= gap_b
        mask[ra[take_a], ca[take_a]] = True
        mask[rb[~take_a], cb[~take_a]] = True
    mask &= free & (d >= min_clearance)
    if mask.any():
        mask = skeletonize(mask)
        cells = np.argwhere(mask)
        drop = cells[~two_basins(~free, d, cells)]
        mask[drop[:, 0], drop[:, 1]] = False
    return mask


def two_basins(occupied: np.ndarray, clearance: np.ndarray, cells: np.ndarray, slack: float = 1.0,
               chunk: int = 128) -> np.ndarray:
    """True where the obstacle cells within ``clearance + slack`` of a cell split into
    at least two 8-connected pieces.  Spurs running into concave corners see one
    bent wall and fail.

    Every obstacle cell in that ball lies in the shell between the clearance and
    the ball radius.  Cells are batched by clearance; the shells of a batch are
    stacked as planes of one volume and labelled in a single call with in-plane
    connectivity only.
    """
    n = len(cells)
    keep = np.zeros(n, dtype=bool)
    if n == 0:
        return keep
    h, w = occupied.shape
    d = clearance[cells[:, 0], cells[:, 1]].astype(float)
    order = np.argsort(d, kind="stable")
    structure = np.zeros((3, 3, 3), dtype=bool)
    structure[1] = STRUCT8
    for s0 in range(0, n, chunk):
        idx = order[s0 : s0 + chunk]
        dd = d[idx, None]
        lo, hi = float(dd.min()), float(dd.max()) + slack
        reach = int(math.ceil(hi))
        rr, cc = np.mgrid[-reach : reach + 1, -reach : reach + 1]
        d2 = (rr * rr + cc * cc).ravel()
        ring = (d2 >= lo * lo - 1e-6) & (d2 <= hi * hi + 1e-9)
        flat = np.flatnonzero(ring)
        off_r, off_c, ring_d2 = rr.ravel()[flat], cc.ravel()[flat], d2[flat]
        shell = (ring_d2[None, :] >= dd * dd - 1e-6) & (ring_d2[None, :] <= (dd + slack) ** 2 + 1e-9)
        pr = cells[idx, 0, None] + off_r[None, :]
        pc = cells[idx, 1, None] + off_c[None, :]
        hit = shell & (pr >= 0) & (pr < h) & (pc >= 0) & (pc < w)
        hit[hit] = occupied[pr[hit], pc[hit]]
        side = 2 * reach + 1
        vol = np.zeros((len(idx), side * side), dtype=bool)
        vol[:, flat] = hit
        labels, _ = ndimage.label(vol.reshape(-1, side, side), structure=structure)
        # labels are issued in scan order, so each plane owns a contiguous range
        top = np.maximum.accumulate(labels.reshape(len(idx), -1).max(axis=1))
        keep[idx] = np.diff(top, prepend=0) >= 2
    return keep


@dataclass
class VoronoiGraph:
    graph: nx.Graph
    resolution: float
    components: Dict[int, int] = field(default_factory=dict)

    @property
    def nodes(self) -> List[Tuple[int, Cell, float]]:
        return [(n, self.graph.nodes[n]["cell"], self.graph.nodes[n]["clearance"]) for n in sorted(self.graph.nodes)]

    @property
    def edges(self) -> List[Tuple[int, int, float]]:
        return sorted((min(a, b), max(a, b), d["length"]) for a, b, d in self.graph.edges(data=True))

    def __len__(self) -> int:
        return self.graph.number_of_nodes()

    def cell(self, n: int) -> Cell:
        return self.graph.nodes[n]["cell"]

    def node_ids(self) -> np.ndarray:
        return np.array(sorted(self.graph.nodes), dtype=np.int64)

    def node_cells(self, ids: Optional[Sequence[int]] = None) -> np.ndarray:
        ids = self.node_ids() if ids is None else ids
        return np.array([self.graph.nodes[n]["cell"] for n in ids], dtype=float).reshape(-1, 2)

    def nearest_node(self, point: Tuple[float, float], among: Optional[Iterable[int]] = None) -> Optional[int]:
        """Euclidean-nearest node id, ties to the lowest id."""
        ids = np.array(sorted(among), dtype=np.int64) if among is not None else self.node_ids()
        if ids.size == 0:
            return None
        cells = self.node_cells(ids)
        d2 = (cells[:, 0] - point[0]) ** 2 + (cells[:, 1] - point[1]) ** 2
        return int(ids[int(np.argmin(d2))])

    def copy(self) -> "VoronoiGraph":
        return VoronoiGraph(self.graph.copy(), self.resolution, dict(self.components))

    def to_json(self) -> Dict:
        return {
            "nodes": [
                {"id": int(n), "x": int(c[1]), "y": int(c[0]), "clearance": round(float(cl), 6)}
                for n, c, cl in self.nodes
            ],
            "edges": [{"a": int(a), "b": int(b), "len": round(float(l), 6)} for a, b, l in self.edges],
        }

    @classmethod
    def from_json(cls, data: Dict, resolution: float) -> "VoronoiGraph":
        g = nx.Graph()
        for n in data["nodes"]:
            g.add_node(int(n["id"]), cell=(int(n["y"]), int(n["x"])), clearance=float(n["clearance"]))
        for e in data["edges"]:
            a, b = int(e["a"]), int(e["b"])
            g.add_edge(a, b, length=float(e["len"]), path=[g.nodes[a]["cell"], g.nodes[b]["cell"]])
        return cls(g, resolution)


def skeleton_graph(mask: np.ndarray, df: DistanceField) -> nx.Graph:
    """8-adjacency graph over skeleton cells; node ids follow raster order.

    A diagonal step is only linked when no 4-neighbour path of length two
    exists, so staircases do not form triangles.
    """
    cells = np.argwhere(mask)
    h, w = mask.shape
    ids = np.full((h, w), -1, dtype=np.int64)
    ids[cells[:, 0], cells[:, 1]] = np.arange(len(cells))
    g = nx.Graph()
    res = df.resolution
    for i, (r, c) in enumerate(cells.tolist()):
        g.add_node(i, cell=(r, c), clearance=float(df.clearance[r, c]) * res)
    edges = []
    for dr, dc in ((0, 1), (1, 0)):
        a = mask[: h - dr, : w - dc] & mask[dr:, dc:]
        ra, ca = np.nonzero(a)
        for u, v in zip(ids[ra, ca].tolist(), ids[ra + dr, ca + dc].tolist()):
            edges.append((u, v, 1.0))
    for dc in (1, -1):
        c0, c1 = (0, w - 1) if dc == 1 else (1, w)
        a = mask[: h - 1, c0:c1] & mask[1:, c0 + dc : c1 + dc]
        ra, ca = np.nonzero(a)
        ca = ca + c0
        for r, c in zip(ra.tolist(), ca.tolist()):
            if mask[r, c + dc] or mask[r + 1, c]:
                continue
            edges.append((int(ids[r, c]), int(ids[r + 1, c + dc]), math.sqrt(2.0)))
    for u, v, l in edges:
        g.add_edge(u, v, length=l * res, path=[g.nodes[u]["cell"], g.nodes[v]["cell"]])
    return g


def build_graph(mask: np.ndarray, df: DistanceField, agent_cell: Optional[Tuple[float, float]] = None) -> VoronoiGraph:
    """Skeleton graph restricted to the component nearest the agent.

    Without an agent position the largest component is kept.  When several
    components tie for the nearest node, the one with most nodes wins.
    """
    if not mask.any():
        raise SkeletonError("empty Voronoi diagram: map too small to skeletonize")
    g = skeleton_graph(mask, df)
    comps = sorted((sorted(c) for c in nx.connected_components(g)), key=lambda c: c[0])
    comp_of = {n: i for i, comp in enumerate(comps) for n in comp}
    if agent_cell is None:
        best = max(range(len(comps)), key=lambda i: (len(comps[i]), -comps[i][0]))
    else:
        ids = np.array(sorted(g.nodes), dtype=np.int64)
        cells = np.array([g.nodes[n]["cell"] for n in ids], dtype=float)
        d2 = (cells[:, 0] - agent_cell[0]) ** 2 + (cells[:, 1] - agent_cell[1]) ** 2
        nearest = ids[d2 == d2.min()]
        best = max({comp_of[int(n)] for n in nearest}, key=lambda i: (len(comps[i]), -comps[i][0]))
    keep = comps[best]
    sub = g.subgraph(keep).copy()
    vg = VoronoiGraph(sub, df.resolution)
    vg.components = {n: 0 for n in keep}
    return vg


def _merge_paths(p1: List[Cell], p2: List[Cell]) -> List[Cell]:
    """Join two cell polylines sharing an endpoint into one running p1 -> p2."""
    if p1[-1] != p2[0]:
        if p1[0] == p2[0]:
            p1 = p1[::-1]
        elif p1[-1] == p2[-1]:
            p2 = p2[::-1]
        elif p1[0] == p2[-1]:
            p1, p2 = p1[::-1], p2[::-1]
    return p1 + p2[1:]


def _oriented(path: List[Cell], start: Cell) -> List[Cell]:
    return path if path[0] == start else path[::-1]


def sparsify(vg: VoronoiGraph, door_centers: Sequence[Tuple[float, float]] = (),
             preserve_cells: float = DOOR_PRESERVE_CELLS) -> VoronoiGraph:
    """Contract degree-2 chain nodes, summing edge lengths.

    Nodes within ``preserve_cells`` of a door center are kept.  A node whose
    two neighbours are already linked is kept too, so a cycle shrinks to a
    triangle; candidates are visited from the highest id down, which leaves
    the lowest ids standing.
    """
    g = vg.graph.copy()
    res = vg.resolution
    preserved = set()
    if len(door_centers):
        centers = np.asarray(door_centers, dtype=float).reshape(-1, 2)
        for n in g.nodes:
            r, c = g.nodes[n]["cell"]
            if np.any((centers[:, 0] - r) ** 2 + (centers[:, 1] - c) ** 2 <= preserve_cells**2 + 1e-9):
                preserved.add(n)
    changed = True
    while changed:
        changed = False
        for n in sorted(g.nodes, reverse=True):
            if n in preserved or g.degree(n) != 2:
                continue
            a, b = sorted(g.neighbors(n))
            if g.has_edge(a, b):
                continue
            ea, eb = g.edges[a, n], g.edges[n, b]
            cell_a, cell_b = g.nodes[a]["cell"], g.nodes[b]["cell"]
            cell_n = g.nodes[n]["cell"]
            path = _merge_paths(_oriented(ea["path"], cell_a), _oriented(eb["path"], cell_n))
            g.remove_node(n)
            g.add_edge(a, b, length=ea["length"] + eb["length"], path=path)
            changed = True
    out = VoronoiGraph(g, res)
    out.components = {n: 0 for n in g.nodes}
    return out


def edge_path_m(vg: VoronoiGraph, a: int, b: int) -> np.ndarray:
    """Polyline of an edge in metric (row, col) coordinates, oriented a -> b."""
    path = _oriented(vg.graph.edges[a, b]["path"], vg.cell(a))
    return np.asarray(path, dtype=float) * vg.resolution


def voronoi_graph(bev: BevMap, agent_cell: Optional[Tuple[float, float]] = None,
                  door_centers: Sequence[Tuple[float, float]] = ()) -> Tuple[VoronoiGraph, DistanceField]:
    """Full pipeline: distance field, skeleton, robot-centric component, sparsification."""
    df = compute_esdf(bev)
    mask = extract_gvd(df, bev.free)
    g = build_graph(mask, df, agent_cell)
    return sparsify(g, door_centers), df
