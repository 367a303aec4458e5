"""Layered SVG rendering of map snapshots and episode traces."""
from __future__ import annotations

import math
from typing import Any, Dict, List, Optional, Sequence, Tuple
from xml.sax.saxutils import escape

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from ..mapping import FREE, OCCUPIED, UNKNOWN, BevMap

SNAPSHOT_SCHEMA = "snapshot.v1"
CELL_PX = 4
PALETTE = ("#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#42d4f4", "#f032e6", "#bfef45",
           "#469990", "#9a6324", "#800000", "#808000", "#000075", "#aaffc3")
MAP_CHARS = {UNKNOWN: "?", FREE: ".", OCCUPIED: "#"}


class RenderError(ValueError):
    """Malformed artifact; the message names the offending field."""


def room_color(rid: int) -> str:
    return PALETTE[rid % len(PALETTE)]


# -- snapshot documents ---------------------------------------------------------


def encode_map(bev: BevMap) -> List[str]:
    lut = np.array([MAP_CHARS[UNKNOWN], MAP_CHARS[FREE], MAP_CHARS[OCCUPIED]])
    return ["".join(row) for row in lut[bev.state]]


def make_snapshot(step: int, bev: BevMap, sg, frontiers, pose, path: Sequence[Tuple[int, int]]) -> Dict[str, Any]:
    return {
        "schema": SNAPSHOT_SCHEMA,
        "step": step,
        "resolution": bev.resolution,
        "height": bev.shape[0],
        "width": bev.shape[1],
        "map": encode_map(bev),
        "scenegraph": sg.to_json(),
        "frontiers": [f.to_json() for f in frontiers],
        "agent": pose.to_json(),
        "trace": [list(c) for c in path],
    }


def _need(doc: Dict, key: str, kind, where: str):
    if not isinstance(doc, dict) or key not in doc:
        raise RenderError(f"{where}{key}: missing")
    value = doc[key]
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise RenderError(f"{where}{key}: expected {getattr(kind, '__name__', kind)}")
    return value


def validate_snapshot(doc: Any) -> None:
    if not isinstance(doc, dict):
        raise RenderError("snapshot: expected a JSON object")
    if doc.get("schema") != SNAPSHOT_SCHEMA:
        raise RenderError(f"schema: expected {SNAPSHOT_SCHEMA!r}")
    h = _need(doc, "height", int, "")
    w = _need(doc, "width", int, "")
    rows = _need(doc, "map", list, "")
    if len(rows) != h or any(not isinstance(r, str) or len(r) != w for r in rows):
        raise RenderError("map: expected height rows of width characters")
    if any(set(r) - set("?.#") for r in rows):
        raise RenderError("map: cells must be one of '?', '.', '#'")
    sg = _need(doc, "scenegraph", dict, "")
    _need(sg, "rooms", list, "scenegraph.")
    _need(sg, "objects", list, "scenegraph.")
    vor = sg.get("voronoi")
    if vor is not None:
        for i, n in enumerate(_need(vor, "nodes", list, "scenegraph.voronoi.")):
            for key in ("id", "x", "y"):
                _need(n, key, int, f"scenegraph.voronoi.nodes[{i}].")
        for i, e in enumerate(_need(vor, "edges", list, "scenegraph.voronoi.")):
            for key in ("a", "b"):
                _need(e, key, int, f"scenegraph.voronoi.edges[{i}].")
    for i, o in enumerate(sg["objects"]):
        _need(o, "position", list, f"scenegraph.objects[{i}].")
        _need(o, "category", str, f"scenegraph.objects[{i}].")
    for i, f in enumerate(_need(doc, "frontiers", list, "")):
        _need(f, "centroid", list, f"frontiers[{i}].")
    _need(doc, "trace", list, "")


# -- svg primitives --------------------------------------------------------------


class Svg:
    def __init__(self, height: int, width: int, px: int = CELL_PX) -> None:
        self.h, self.w, self.px = height, width, px
        self.layers: List[Tuple[str, List[str]]] = []

    def layer(self, name: str) -> List[str]:
        items: List[str] = []
        self.layers.append((name, items))
        return items

    def xy(self, cell: Sequence[float]) -> Tuple[float, float]:
        """Cell centre (row, col) to pixel coordinates."""
        return ((cell[1] + 0.5) * self.px, (cell[0] + 0.5) * self.px)

    def text(self) -> str:
        W, H = self.w * self.px, self.h * self.px
        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
               f'<rect id="frame" x="0" y="0" width="{W}" height="{H}" fill="#c8c8c8" stroke="#000" stroke-width="1"/>']
        for name, items in self.layers:
            if items:
                out.append(f'<g id="{name}">')
                out.extend(items)
                out.append("</g>")
        out.append("</svg>")
        return "\n".join(out) + "\n"


def _runs(mask_row: str, ch: str) -> List[Tuple[int, int]]:
    runs, start = [], None
    for i, c in enumerate(mask_row + "\0"):
        if c == ch and start is None:
            start = i
        elif c != ch and start is not None:
            runs.append((start, i - start))
            start = None
    return runs


def _occupancy(svg: Svg, rows: Sequence[str]) -> None:
    for name, ch, color in (("free", ".", "#ffffff"), ("occupied", "#", "#404040")):
        layer = svg.layer(name)
        for r, row in enumerate(rows):
            for c, n in _runs(row, ch):
                layer.append(f'<rect x="{c * svg.px}" y="{r * svg.px}" width="{n * svg.px}" '
                             f'height="{svg.px}" fill="{color}"/>')


def _hull_points(cells: np.ndarray) -> np.ndarray:
    if len(cells) >= 3:
        try:
            return cells[ConvexHull(cells).vertices]
        except QhullError:
            pass
    return cells


def _fmt(points) -> str:
    return " ".join(f"{x:.1f},{y:.1f}" for x, y in points)


def render_snapshot(doc: Dict[str, Any]) -> str:
    validate_snapshot(doc)
    svg = Svg(doc["height"], doc["width"])
    _occupancy(svg, doc["map"])
    sg = doc["scenegraph"]
    vor = sg.get("voronoi") or {"nodes": [], "edges": []}
    cell = {n["id"]: (n["y"], n["x"]) for n in vor["nodes"]}
    room_of = {n: r["id"] for r in sg["rooms"] for n in r["voronoi_nodes"]}

    hulls = svg.layer("rooms")
    for r in sg["rooms"]:
        pts = np.array([cell[n] for n in r["voronoi_nodes"] if n in cell], dtype=float)
        if len(pts) == 0:
            continue
        ring = [svg.xy(p) for p in _hull_points(pts)]
        color = room_color(r["id"])
        hulls.append(f'<polygon class="room" data-room="{r["id"]}" points="{_fmt(ring)}" fill="{color}" '
                     f'fill-opacity="0.25" stroke="{color}" stroke-width="2"/>')
        ax, ay = svg.xy(cell.get(r["anchor"], pts[0]))
        hulls.append(f'<text x="{ax:.1f}" y="{ay:.1f}" font-size="10" fill="{color}">{escape(r["label"])}</text>')

    cut = {tuple(sorted(e)) for e in sg.get("cut_edges", [])}
    edges = svg.layer("voronoi")
    for e in vor["edges"]:
        a, b = e["a"], e["b"]
        if a not in cell or b not in cell or tuple(sorted((a, b))) in cut:
            continue
        (x1, y1), (x2, y2) = svg.xy(cell[a]), svg.xy(cell[b])
        color = room_color(room_of[a]) if a in room_of and room_of.get(b) == room_of[a] else "#777777"
        edges.append(f'<line x1="{x1:.1f}" y1="{y1:.1f}" x2="{x2:.1f}" y2="{y2:.1f}" stroke="{color}" stroke-width="1.5"/>')

    crosses = svg.layer("cut-edges")
    for group in _door_groups([e for e in sorted(cut) if e[0] in cell and e[1] in cell]):
        mids = [np.add(svg.xy(cell[a]), svg.xy(cell[b])) / 2 for a, b in group]
        mx, my = np.mean(mids, axis=0)
        s = 4
        crosses.append(f'<path class="door-cross" d="M{mx - s:.1f},{my - s:.1f} L{mx + s:.1f},{my + s:.1f} '
                       f'M{mx - s:.1f},{my + s:.1f} L{mx + s:.1f},{my - s:.1f}" stroke="#d00" stroke-width="2"/>')

    glyphs = svg.layer("objects")
    for o in sg["objects"]:
        x, y = svg.xy(o["position"])
        fill = {"open": "#2a2", "closed": "#a22"}.get(o.get("state"), "#222")
        glyphs.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="3" fill="{fill}"><title>{escape(o["category"])}</title></circle>')

    marks = svg.layer("frontiers")
    for f in doc["frontiers"]:
        x, y = svg.xy(f["centroid"])
        marks.append(f'<rect class="frontier" x="{x - 3:.1f}" y="{y - 3:.1f}" width="6" height="6" fill="#fc0" stroke="#960"/>')

    _trace(svg, doc["trace"], doc.get("agent"))
    return svg.text()


def _door_groups(edges: Sequence[Tuple[int, int]]) -> List[List[Tuple[int, int]]]:
    """Cut edges sharing a node belong to the same doorway and get a single marker."""
    parent: Dict[int, int] = {}

    def find(x: int) -> int:
        while parent.setdefault(x, x) != x:
            x = parent[x]
        return x

    for a, b in edges:
        parent[find(a)] = find(b)
    groups: Dict[int, List[Tuple[int, int]]] = {}
    for e in edges:
        groups.setdefault(find(e[0]), []).append(e)
    return list(groups.values())


def _trace(svg: Svg, path: Sequence[Sequence[int]], pose: Optional[Sequence[float]] = None) -> None:
    layer = svg.layer("trace")
    if len(path) >= 2:
        layer.append(f'<polyline class="trace" points="{_fmt(svg.xy(c) for c in path)}" fill="none" '
                     f'stroke="#06c" stroke-width="1.5"/>')
    if pose is not None:
        x, y = svg.xy(pose[:2])
        dx, dy = math.cos(pose[2]) * 8, math.sin(pose[2]) * 8
        layer.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="4" fill="#06c"/>')
        layer.append(f'<line x1="{x:.1f}" y1="{y:.1f}" x2="{x + dx:.1f}" y2="{y + dy:.1f}" stroke="#06c" stroke-width="2"/>')


def trace_path(trace: Sequence[Dict]) -> List[Tuple[int, int]]:
    """Concatenated agent path over all step lines, without repeated joints."""
    out: List[Tuple[int, int]] = []
    for n, line in enumerate(trace):
        if line.get("kind") != "step":
            continue
        if not isinstance(line.get("path"), list):
            raise RenderError(f"trace line {n + 1}: path: expected a list")
        for c in line["path"]:
            c = (int(c[0]), int(c[1]))
            if not out or out[-1] != c:
                out.append(c)
    return out


def polyline_length(path: Sequence[Tuple[int, int]]) -> float:
    return float(sum(math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(path, path[1:])))


def render_trace(trace: Sequence[Dict], episode) -> str:
    """Ground-truth map with the agent's path drawn over it."""
    spec = episode.world
    rows = []
    fp = spec.footprint_grid() >= 0
    for r in range(spec.height):
        rows.append("".join("#" if spec.walls[r, c] or fp[r, c] else "." for c in range(spec.width)))
    svg = Svg(spec.height, spec.width)
    _occupancy(svg, rows)
    doors = svg.layer("doors")
    for d in spec.doors:
        x, y = svg.xy(d.center)
        doors.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="3" fill="none" stroke="#d00"/>')
    path = trace_path(trace)
    last = next((l for l in reversed(trace) if l.get("kind") == "step"), None)
    _trace(svg, path, last.get("pose") if last else None)
    return svg.text()
