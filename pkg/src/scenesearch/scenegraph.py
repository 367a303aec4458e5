"""Hierarchical scene graph: rooms from door-density separation, objects assigned to rooms."""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

import networkx as nx
import numpy as np

from .mapping import BevMap, Frontier, Instance, ViewpointIndex
from .voronoi import VoronoiGraph, edge_path_m

LAMBDA = 1.3
BANDWIDTH_CELLS2 = 2.0
DENSITY_THRESHOLD = 0.3
MAX_VIEWPOINTS = 5
DOOR_LINK_RADIUS_M = 2.0
TIE_EPS = 1e-9

UNEXPLORED = "unexplored room"
GENERIC = "room"


# -- door density -------------------------------------------------------------

@dataclass
class DoorDensity:
    """Isotropic Gaussian mixture over door centers (cell coordinates).

    ``bandwidth`` is the kernel variance in cells squared.  An edge is cut when
    the mean mixture density along it, scaled by the number of doors, reaches
    ``threshold`` times the peak of a single kernel, so the cut region around
    each door does not shrink as more doors are observed.
    """

    centers: np.ndarray
    bandwidth: float = BANDWIDTH_CELLS2
    threshold: float = DENSITY_THRESHOLD

    def __post_init__(self) -> None:
        self.centers = np.asarray(self.centers, dtype=float).reshape(-1, 2)

    @property
    def peak(self) -> float:
        return 1.0 / (2.0 * math.pi * self.bandwidth)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        if len(self.centers) == 0:
            return np.zeros(len(pts))
        d2 = ((pts[:, None, :] - self.centers[None, :, :]) ** 2).sum(axis=2)
        return (self.peak * np.exp(-0.5 * d2 / self.bandwidth)).mean(axis=1)

    def line_integral(self, polyline: np.ndarray) -> Tuple[float, float]:
        """Trapezoid integral of the density along a polyline, and its length (cells)."""
        pts = _densify(np.asarray(polyline, dtype=float))
        seg = np.hypot(*np.diff(pts, axis=0).T)
        length = float(seg.sum())
        if length == 0:
            return 0.0, 0.0
        vals = self(pts)
        return float(((vals[:-1] + vals[1:]) * 0.5 * seg).sum()), length

    def cuts(self, polyline: np.ndarray) -> bool:
        if len(self.centers) == 0:
            return False
        integral, length = self.line_integral(polyline)
        if length == 0:
            return False
        return integral * len(self.centers) >= self.threshold * self.peak * length


def _densify(pts: np.ndarray, spacing: float = 1.0) -> np.ndarray:
    out = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(1, int(math.ceil(np.hypot(*(b - a)) / spacing)))
        for k in range(1, n + 1):
            out.append(a + (b - a) * k / n)
    return np.array(out)


# -- separation and adjacency ------------------------------------------------

@dataclass
class Partition:
    rooms: List[List[int]]
    cut_edges: List[Tuple[int, int]]
    removed_nodes: Set[int]

    def label_of(self) -> Dict[int, int]:
        return {n: i for i, room in enumerate(self.rooms) for n in room}


def separate_rooms(g: VoronoiGraph, density: DoorDensity) -> Partition:
    cut = []
    sep = g.graph.copy()
    for a, b in sorted((min(a, b), max(a, b)) for a, b in g.graph.edges):
        poly = edge_path_m(g, a, b) / g.resolution
        if density.cuts(poly):
            cut.append((a, b))
    sep.remove_edges_from(cut)
    isolated = {n for n in sep.nodes if sep.degree(n) == 0 and len(g.graph) > 1}
    if cut:
        sep.remove_nodes_from(isolated)
    else:
        isolated = set()
    rooms = sorted((sorted(c) for c in nx.connected_components(sep)), key=lambda c: c[0])
    return Partition(rooms, cut, isolated)


def _csgraph(g: VoronoiGraph):
    from scipy.sparse import csr_matrix

    ids = g.node_ids()
    index = {int(n): i for i, n in enumerate(ids)}
    rows, cols, vals = [], [], []
    for a, b, d in g.graph.edges(data=True):
        rows += [index[a], index[b]]
        cols += [index[b], index[a]]
        vals += [d["length"], d["length"]]
    mat = csr_matrix((vals, (rows, cols)), shape=(len(ids), len(ids)))
    return ids, index, mat


def room_adjacency(g_full: VoronoiGraph, partition: Partition) -> Set[Tuple[int, int]]:
    """Room pairs joined by a shortest path that crosses exactly those two rooms."""
    from scipy.sparse.csgraph import dijkstra

    if len(partition.rooms) < 2:
        return set()
    ids, index, mat = _csgraph(g_full)
    label = partition.label_of()
    lab = np.array([label.get(int(n), -1) for n in ids])
    dist, pred = dijkstra(mat, directed=False, return_predecessors=True)
    adjacent: Set[Tuple[int, int]] = set()
    for s in range(len(ids)):
        if lab[s] < 0:
            continue
        # labels met on the way from s, capped at 3 (only "exactly two" matters)
        seen: Dict[int, FrozenSet[int]] = {s: frozenset([lab[s]])}
        for t in np.argsort(dist[s], kind="stable"):
            t = int(t)
            if t == s or not np.isfinite(dist[s, t]):
                continue
            p = int(pred[s, t])
            prev = seen[p]
            cur = prev if lab[t] < 0 or len(prev) > 2 else prev | {lab[t]}
            seen[t] = cur
            if lab[t] >= 0 and lab[t] != lab[s] and len(cur) == 2:
                adjacent.add((min(lab[s], lab[t]), max(lab[s], lab[t])))
    return {(int(a), int(b)) for a, b in adjacent}


# -- object assignment -------------------------------------------------------

@dataclass
class Assignment:
    node: int
    room: int
    cost: float
    low_confidence: bool = False


def _dijkstra_from(g: nx.Graph, init: Dict[int, float]) -> Dict[int, float]:
    dist = dict(init)
    heap = [(d, n) for n, d in init.items()]
    heapq.heapify(heap)
    while heap:
        d, n = heapq.heappop(heap)
        if d > dist.get(n, math.inf):
            continue
        for m, data in g[n].items():
            nd = d + data["length"]
            if nd < dist.get(m, math.inf):
                dist[m] = nd
                heapq.heappush(heap, (nd, m))
    return dist


def assign_object(g_full: VoronoiGraph, partition: Partition, position: Tuple[float, float],
                  viewpoints: Sequence[Tuple[float, float]], lam: float = LAMBDA) -> Assignment:
    """Minimize path(n_o, n_vp) + d(o, n_o)^lam + d(vp, n_vp) over room nodes.

    Paths run over the unseparated graph so that an object seen through a
    doorway can still land in the room it physically sits in.  Distances are
    in meters; ties go to the smaller d(o, n_o), then the lower node id.
    """
    label = partition.label_of()
    res = g_full.resolution
    retained = sorted(label)
    if not retained:
        raise ValueError("partition has no rooms")
    cells = g_full.node_cells(retained)
    if viewpoints:
        vps = np.asarray(viewpoints, dtype=float).reshape(-1, 2)
        dvp = np.sqrt(((cells[:, None, :] - vps[None, :, :]) ** 2).sum(axis=2)).min(axis=1) * res
        dist = _dijkstra_from(g_full.graph, {n: float(d) for n, d in zip(retained, dvp)})
        best = None
        for i, n in enumerate(retained):
            if n not in dist:
                continue
            do = math.hypot(cells[i, 0] - position[0], cells[i, 1] - position[1]) * res
            total = dist[n] + do**lam
            key = (total, do, n)
            if best is None or total < best[0] - TIE_EPS or (
                abs(total - best[0]) <= TIE_EPS and (do, n) < (best[1], best[2])
            ):
                best = key
        if best is not None:
            return Assignment(best[2], label[best[2]], best[0])
    n = g_full.nearest_node(position, among=retained)
    return Assignment(n, label[n], math.inf, low_confidence=True)


# -- classification ----------------------------------------------------------

def load_room_rules() -> Dict[str, str]:
    text = resources.files("scenesearch.data").joinpath("room_rules.json").read_text()
    return json.loads(text)


class RuleClassifier:
    """Majority vote of per-category room keywords; ties give the generic label."""

    name = "rules"

    def __init__(self, rules: Optional[Dict[str, str]] = None) -> None:
        self.rules = rules if rules is not None else load_room_rules()

    def label(self, categories: Sequence[str]) -> str:
        if not categories:
            return UNEXPLORED
        votes: Dict[str, int] = {}
        for cat in categories:
            lab = self.rules.get(cat)
            if lab:
                votes[lab] = votes.get(lab, 0) + 1
        if not votes:
            return GENERIC
        top = max(votes.values())
        winners = [k for k, v in votes.items() if v == top]
        return winners[0] if len(winners) == 1 else GENERIC

    def __call__(self, rooms: Sequence[Sequence[str]]) -> List[str]:
        return [self.label(cats) for cats in rooms]


@dataclass
class ClassifierEvent:
    kind: str
    detail: str


def classify_rooms(rooms: Sequence[Sequence[str]], classifier: Optional[Callable] = None,
                   events: Optional[List[ClassifierEvent]] = None) -> List[str]:
    """One label per room.  An external classifier failing falls back to the rule table."""
    rules = RuleClassifier()
    if classifier is None or isinstance(classifier, RuleClassifier):
        return (classifier or rules)(rooms)
    try:
        labels = classifier(rooms)
        if not isinstance(labels, list) or len(labels) != len(rooms) or not all(
            isinstance(x, str) and x.strip() for x in labels
        ):
            raise ValueError(f"malformed classifier reply: {labels!r}")
    except Exception as exc:  # any backend failure degrades to the rule table
        if events is not None:
            events.append(ClassifierEvent("classifier_fallback", str(exc)))
        return rules(rooms)
    return [lab.strip().lower() if cats else UNEXPLORED for lab, cats in zip(labels, rooms)]


def dedupe_labels(labels: Sequence[str]) -> List[str]:
    counts: Dict[str, int] = {}
    for lab in labels:
        counts[lab] = counts.get(lab, 0) + 1
    seen: Dict[str, int] = {}
    out = []
    for lab in labels:
        if counts[lab] == 1:
            out.append(lab)
        else:
            seen[lab] = seen.get(lab, 0) + 1
            out.append(f"{lab} {seen[lab]}")
    return out


# -- scene graph -------------------------------------------------------------

@dataclass
class RoomNode:
    id: int
    label: str
    voronoi_nodes: List[int]
    anchor: int  # node nearest the room centroid

    def to_json(self) -> Dict:
        return {"id": self.id, "label": self.label, "voronoi_nodes": list(self.voronoi_nodes), "anchor": self.anchor}


@dataclass
class ObjectNode:
    id: int
    category: str
    state: str
    room: int
    position: Tuple[int, int]
    node: int
    rooms: Tuple[int, ...] = ()
    parent: Optional[int] = None
    relation: Optional[str] = None
    low_confidence: bool = False

    @property
    def openable(self) -> bool:
        return self.state in ("open", "closed")

    def to_json(self) -> Dict:
        return {
            "id": self.id, "category": self.category, "state": self.state, "room": self.room,
            "rooms": list(self.rooms), "position": list(self.position), "node": self.node,
            "parent": self.parent, "relation": self.relation, "low_confidence": self.low_confidence,
        }


@dataclass
class SceneGraph:
    rooms: List[RoomNode] = field(default_factory=list)
    objects: List[ObjectNode] = field(default_factory=list)
    adjacency: Set[Tuple[int, int]] = field(default_factory=set)
    graph: Optional[VoronoiGraph] = None
    partition: Optional[Partition] = None
    events: List[ClassifierEvent] = field(default_factory=list)

    def room(self, rid: int) -> RoomNode:
        return self.rooms[rid]

    def room_by_label(self, label: str) -> Optional[RoomNode]:
        return next((r for r in self.rooms if r.label == label), None)

    def objects_in(self, rid: int) -> List[ObjectNode]:
        return [o for o in self.objects if o.room == rid or rid in o.rooms]

    def object(self, oid: int) -> Optional[ObjectNode]:
        return next((o for o in self.objects if o.id == oid), None)

    def node_room(self) -> Dict[int, int]:
        return {n: r.id for r in self.rooms for n in r.voronoi_nodes}

    def room_of_point(self, point: Tuple[float, float]) -> Optional[int]:
        """Room of the retained node nearest to ``point`` (ties lowest id)."""
        if self.graph is None or not self.rooms:
            return None
        lookup = self.node_room()
        n = self.graph.nearest_node(point, among=lookup.keys())
        return None if n is None else lookup[n]

    def to_json(self) -> Dict:
        return {
            "schema": "scenegraph.v1",
            "rooms": [r.to_json() for r in self.rooms],
            "objects": [o.to_json() for o in self.objects],
            "room_adjacency": sorted([list(p) for p in self.adjacency]),
            "cut_edges": [list(e) for e in (self.partition.cut_edges if self.partition else [])],
            "voronoi": self.graph.to_json() if self.graph is not None else None,
        }


def door_centers(bev: BevMap) -> List[Tuple[float, float]]:
    return [tuple(map(float, i.position)) for i in sorted(bev.instances.values(), key=lambda x: x.id)
            if i.category == "door"]


def _anchor(g: VoronoiGraph, nodes: Sequence[int]) -> int:
    cells = g.node_cells(nodes)
    centre = cells.mean(axis=0)
    return g.nearest_node((float(centre[0]), float(centre[1])), among=nodes)


def _door_rooms(g: VoronoiGraph, label: Dict[int, int], centre: Tuple[float, float], primary: int) -> Tuple[int, ...]:
    ids = sorted(label)
    cells = g.node_cells(ids)
    d = np.hypot(cells[:, 0] - centre[0], cells[:, 1] - centre[1]) * g.resolution
    best: Dict[int, float] = {}
    for n, dist in zip(ids, d):
        r = label[n]
        if dist < best.get(r, math.inf):
            best[r] = float(dist)
    near = sorted((v, r) for r, v in best.items() if v <= DOOR_LINK_RADIUS_M and r != primary)
    return (primary,) + tuple(r for _, r in near[:1])


def build_scene_graph(bev: BevMap, vpi: ViewpointIndex, graph: VoronoiGraph,
                      classifier: Optional[Callable] = None, density: Optional[DoorDensity] = None) -> SceneGraph:
    """Assemble rooms, adjacency and object assignments for the current map."""
    centres = door_centers(bev)
    density = density or DoorDensity(np.array(centres).reshape(-1, 2))
    part = separate_rooms(graph, density)
    label = part.label_of()
    sg = SceneGraph(graph=graph, partition=part)
    sg.adjacency = room_adjacency(graph, part)

    objects: List[ObjectNode] = []
    for inst in sorted(bev.instances.values(), key=lambda x: x.id):
        vps = [p.cell for p in vpi.nearest(inst.id, inst.position, MAX_VIEWPOINTS)]
        a = assign_object(graph, part, inst.position, vps)
        rooms = (a.room,)
        if inst.category == "door":
            rooms = _door_rooms(graph, label, inst.position, a.room)
        objects.append(ObjectNode(inst.id, inst.category, inst.state, a.room, tuple(inst.position), a.node, rooms,
                                  inst.parent, inst.relation, a.low_confidence))
    sg.objects = objects

    cats = [[o.category for o in objects if o.room == i and o.category != "door"] for i in range(len(part.rooms))]
    labels = dedupe_labels(classify_rooms(cats, classifier, sg.events))
    sg.rooms = [RoomNode(i, labels[i], nodes, _anchor(graph, nodes)) for i, nodes in enumerate(part.rooms)]
    return sg


def match_frontiers(frontiers: Sequence[Frontier], sg: SceneGraph) -> List[Frontier]:
    for f in frontiers:
        f.room_id = sg.room_of_point(f.centroid)
    return list(frontiers)
