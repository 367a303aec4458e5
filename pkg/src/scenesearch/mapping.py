"""The agent's map belief: tri-state BEV grid, semantics, viewpoints and frontiers."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import ndimage

from .grid import STRUCT4, STRUCT8
from .world.model import DEFAULT_RESOLUTION, Cell, Pose
from .world.sim import Observation

UNKNOWN = 0
FREE = 1
OCCUPIED = 2

MIN_FRONTIER_CELLS = 3


@dataclass
class Instance:
    id: int
    category: str
    state: str
    position: Cell
    volume_class: str = "large"
    parent: Optional[int] = None
    relation: Optional[str] = None


@dataclass
class BevMap:
    state: np.ndarray  # int8, UNKNOWN / FREE / OCCUPIED
    semantic: np.ndarray  # int32 instance id per cell, -1 for none
    resolution: float = DEFAULT_RESOLUTION
    instances: Dict[int, Instance] = field(default_factory=dict)

    @classmethod
    def empty(cls, height: int, width: int, resolution: float = DEFAULT_RESOLUTION) -> "BevMap":
        return cls(
            np.zeros((height, width), dtype=np.int8),
            np.full((height, width), -1, dtype=np.int32),
            resolution,
        )

    @property
    def shape(self) -> Tuple[int, int]:
        return self.state.shape

    @property
    def free(self) -> np.ndarray:
        return self.state == FREE

    @property
    def occupied(self) -> np.ndarray:
        return self.state == OCCUPIED

    @property
    def unknown(self) -> np.ndarray:
        return self.state == UNKNOWN

    def copy(self) -> "BevMap":
        return BevMap(self.state.copy(), self.semantic.copy(), self.resolution, dict(self.instances))

    def categories(self) -> set:
        return {inst.category for inst in self.instances.values()}

    # -- export -------------------------------------------------------------

    def write_pgm(self, path: Path) -> None:
        """Binary PGM: unknown 205, free 254, occupied 0 (map_server convention)."""
        lut = np.array([205, 254, 0], dtype=np.uint8)
        img = lut[self.state]
        h, w = img.shape
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n255\n".encode())
            fh.write(img.tobytes())

    def sidecar(self) -> Dict:
        sem = {}
        rows, cols = np.nonzero(self.semantic >= 0)
        for r, c in zip(rows.tolist(), cols.tolist()):
            sem.setdefault(int(self.semantic[r, c]), []).append([r, c])
        return {
            "schema": "bevmap.v1",
            "resolution": self.resolution,
            "height": int(self.shape[0]),
            "width": int(self.shape[1]),
            "instances": [
                {
                    "id": i.id,
                    "category": i.category,
                    "state": i.state,
                    "position": list(i.position),
                    "volume_class": i.volume_class,
                    "parent": i.parent,
                    "relation": i.relation,
                }
                for i in sorted(self.instances.values(), key=lambda x: x.id)
            ],
            "semantic_cells": {str(k): v for k, v in sorted(sem.items())},
        }

    def export(self, stem: Path) -> Tuple[Path, Path]:
        stem = Path(stem)
        pgm, js = stem.with_suffix(".pgm"), stem.with_suffix(".json")
        self.write_pgm(pgm)
        sidecar = self.sidecar()
        sidecar["pgm"] = pgm.name
        js.write_text(json.dumps(sidecar))
        return pgm, js

    @classmethod
    def load(cls, sidecar_path: Path) -> "BevMap":
        from .world.model import SchemaError

        sidecar_path = Path(sidecar_path)
        data = json.loads(sidecar_path.read_text())
        if data.get("schema") != "bevmap.v1":
            raise SchemaError("schema: expected 'bevmap.v1'")
        raw = (sidecar_path.parent / data["pgm"]).read_bytes()
        header, _, body = _split_pgm(raw)
        w, h = header
        img = np.frombuffer(body, dtype=np.uint8).reshape(h, w)
        state = np.full((h, w), UNKNOWN, dtype=np.int8)
        state[img == 254] = FREE
        state[img == 0] = OCCUPIED
        bev = cls.empty(h, w, float(data["resolution"]))
        bev.state = state
        for key, cells in data["semantic_cells"].items():
            for r, c in cells:
                bev.semantic[r, c] = int(key)
        for i in data["instances"]:
            bev.instances[i["id"]] = Instance(
                i["id"], i["category"], i["state"], tuple(i["position"]), i["volume_class"], i["parent"], i["relation"]
            )
        return bev


def _split_pgm(raw: bytes) -> Tuple[Tuple[int, int], int, bytes]:
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while not raw[pos : pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    pos += 1
    if tokens[0] != b"P5":
        raise ValueError("not a binary PGM")
    return (int(tokens[1]), int(tokens[2])), int(tokens[3]), raw[pos:]


@dataclass
class ViewpointIndex:
    poses: Dict[int, List[Pose]] = field(default_factory=dict)

    def add(self, iid: int, pose: Pose) -> None:
        self.poses.setdefault(iid, []).append(pose)

    def __contains__(self, iid: int) -> bool:
        return iid in self.poses

    def get(self, iid: int) -> List[Pose]:
        return self.poses.get(iid, [])

    def nearest(self, iid: int, position: Tuple[float, float], k: int = 5) -> List[Pose]:
        """Up to ``k`` distinct viewpoint cells nearest to ``position`` (stable order)."""
        seen = {}
        for p in self.poses.get(iid, []):
            seen.setdefault(p.cell, p)
        ranked = sorted(seen.values(), key=lambda p: ((p.row - position[0]) ** 2 + (p.col - position[1]) ** 2, p.cell))
        return ranked[:k]


def integrate(bev: BevMap, vpi: ViewpointIndex, obs: Observation, pose: Optional[Pose] = None) -> Tuple[BevMap, ViewpointIndex]:
    """Fold one observation into the map; latest observation wins per cell.

    Updates ``bev`` and ``vpi`` in place and returns them.
    """
    pose = pose or obs.pose
    if obs.cells.size:
        rows, cols = obs.cells[:, 0], obs.cells[:, 1]
        bev.state[rows, cols] = np.where(obs.occupied, OCCUPIED, FREE).astype(np.int8)
        bev.semantic[rows, cols] = obs.instance
    for iid, det in obs.detections.items():
        bev.instances[iid] = Instance(det.id, det.category, det.state, tuple(det.position), det.volume_class,
                                      det.parent, det.relation)
        vpi.add(iid, pose)
    return bev, vpi


@dataclass
class Frontier:
    id: int
    cells: List[Cell]
    centroid: Cell
    kind: str  # interior | outward
    room_id: Optional[int] = None

    def to_json(self) -> Dict:
        return {
            "id": self.id,
            "centroid": list(self.centroid),
            "kind": self.kind,
            "room_id": self.room_id,
            "size": len(self.cells),
        }


def enclosed_unknown(bev: BevMap) -> np.ndarray:
    """Unknown cells that disappear when holes in the known region are filled."""
    known = ~bev.unknown
    filled = ndimage.binary_fill_holes(known, structure=STRUCT4)
    return filled & bev.unknown


def frontier_cells(bev: BevMap) -> np.ndarray:
    unknown = bev.unknown
    touch = np.zeros_like(unknown)
    touch[1:, :] |= unknown[:-1, :]
    touch[:-1, :] |= unknown[1:, :]
    touch[:, 1:] |= unknown[:, :-1]
    touch[:, :-1] |= unknown[:, 1:]
    return bev.free & touch


def detect_frontiers(bev: BevMap, min_cells: int = MIN_FRONTIER_CELLS) -> List[Frontier]:
    """Cluster free cells bordering unknown space and classify them.

    A frontier is ``interior`` when every unknown cell it borders lies in a
    pocket that hole-filling of the known region closes; otherwise it leads
    out to unexplored space and is ``outward``.
    """
    mask = frontier_cells(bev)
    if not mask.any():
        return []
    labels, count = ndimage.label(mask, structure=STRUCT8)
    holes = enclosed_unknown(bev)
    open_unknown = bev.unknown & ~holes
    touches_open = np.zeros_like(mask)
    touches_open[1:, :] |= open_unknown[:-1, :]
    touches_open[:-1, :] |= open_unknown[1:, :]
    touches_open[:, 1:] |= open_unknown[:, :-1]
    touches_open[:, :-1] |= open_unknown[:, 1:]

    frontiers: List[Frontier] = []
    objects = ndimage.find_objects(labels)
    for lab in range(1, count + 1):
        sl = objects[lab - 1]
        local = labels[sl] == lab
        rr, cc = np.nonzero(local)
        rr = rr + sl[0].start
        cc = cc + sl[1].start
        if rr.size < min_cells:
            continue
        outward = bool(touches_open[rr, cc].any())
        mr, mc = rr.mean(), cc.mean()
        d2 = (rr - mr) ** 2 + (cc - mc) ** 2
        best = np.lexsort((cc, rr, d2))[0]
        cells = sorted(zip(rr.tolist(), cc.tolist()))
        frontiers.append(
            Frontier(len(frontiers), cells, (int(rr[best]), int(cc[best])), "outward" if outward else "interior")
        )
    return frontiers


def unknown_count(bev: BevMap) -> int:
    return int(np.count_nonzero(bev.state == UNKNOWN))


def ground_truth_map(spec, doors_open: bool = True) -> BevMap:
    """Fully observed map of a world, as if every cell had been seen."""
    from .world.model import CLOSED, OPEN

    states = {d.id: (OPEN if doors_open else d.state) for d in spec.doors}
    occ = spec.walls | (spec.footprint_grid() >= 0)
    bev = BevMap.empty(spec.height, spec.width, spec.resolution)
    bev.semantic = spec.footprint_grid().astype(np.int32)
    for d in spec.doors:
        for r, c in d.blocked_cells:
            bev.semantic[r, c] = d.id
            if states[d.id] == CLOSED:
                occ[r, c] = True
        centre = (int(round(d.center[0])), int(round(d.center[1])))
        bev.instances[d.id] = Instance(d.id, "door", states[d.id], centre, "large")
    bev.state[:] = np.where(occ, OCCUPIED, FREE)
    for o in spec.objects:
        parent = o.inside_of if o.inside_of is not None else o.on_top_of
        relation = "inside" if o.inside_of is not None else ("on_top" if o.on_top_of is not None else None)
        bev.instances[o.id] = Instance(o.id, o.category, o.state, tuple(o.position), o.volume_class, parent, relation)
    return bev
