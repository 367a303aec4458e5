"""Ground-truth world description and its ``world.v1`` JSON document."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np

Cell = Tuple[int, int]

SCHEMA = "world.v1"
DEFAULT_RESOLUTION = 0.075

OPEN = "open"
CLOSED = "closed"
NOT_APPLICABLE = "n/a"


class SchemaError(ValueError):
    """A serialized document is missing or has a malformed field."""


@dataclass(frozen=True)
class Pose:
    row: int
    col: int
    heading: float = 0.0  # radians, 0 = +col, pi/2 = +row

    @property
    def cell(self) -> Cell:
        return (self.row, self.col)

    def to_json(self) -> List[float]:
        return [self.row, self.col, round(self.heading, 9)]

    @classmethod
    def from_json(cls, data: Iterable[float]) -> "Pose":
        r, c, h = data
        return cls(int(r), int(c), float(h))


@dataclass
class Door:
    id: int
    center: Tuple[float, float]
    blocked_cells: List[Cell]
    state: str = CLOSED
    rooms: Tuple[int, int] = (-1, -1)

    category = "door"


@dataclass
class ObjectSpec:
    id: int
    category: str
    position: Cell
    footprint: List[Cell]
    openable: bool = False
    state: str = NOT_APPLICABLE
    contains: List[int] = field(default_factory=list)
    on_top_of: Optional[int] = None
    inside_of: Optional[int] = None
    volume_class: str = "large"

    @property
    def is_top_level(self) -> bool:
        return self.on_top_of is None and self.inside_of is None


@dataclass
class GtRoom:
    id: int
    label: str


@dataclass
class WorldSpec:
    width: int
    height: int
    walls: np.ndarray  # bool (height, width)
    room_grid: np.ndarray  # int (height, width), -1 outside rooms
    rooms: List[GtRoom]
    doors: List[Door] = field(default_factory=list)
    objects: List[ObjectSpec] = field(default_factory=list)
    agent_start: Pose = Pose(0, 0, 0.0)
    resolution: float = DEFAULT_RESOLUTION

    def room_cells(self, room_id: int) -> List[Cell]:
        rows, cols = np.nonzero(self.room_grid == room_id)
        return list(zip(rows.tolist(), cols.tolist()))

    @property
    def gt_rooms(self) -> List[Tuple[int, str, List[Cell]]]:
        return [(r.id, r.label, self.room_cells(r.id)) for r in self.rooms]

    def object_by_id(self, oid: int) -> Optional[ObjectSpec]:
        for obj in self.objects:
            if obj.id == oid:
                return obj
        return None

    def door_by_id(self, did: int) -> Optional[Door]:
        for door in self.doors:
            if door.id == did:
                return door
        return None

    def next_instance_id(self) -> int:
        ids = [d.id for d in self.doors] + [o.id for o in self.objects]
        return max(ids, default=-1) + 1

    def door_grid(self) -> np.ndarray:
        grid = np.full((self.height, self.width), -1, dtype=np.int32)
        for door in self.doors:
            for r, c in door.blocked_cells:
                grid[r, c] = door.id
        return grid

    def footprint_grid(self) -> np.ndarray:
        """Instance id per cell for furniture footprints (top-level objects)."""
        grid = np.full((self.height, self.width), -1, dtype=np.int32)
        for obj in self.objects:
            if obj.is_top_level:
                for r, c in obj.footprint:
                    grid[r, c] = obj.id
        return grid

    def meters(self, cell: Tuple[float, float]) -> Tuple[float, float]:
        return (cell[0] * self.resolution, cell[1] * self.resolution)

    def distance_m(self, a: Tuple[float, float], b: Tuple[float, float]) -> float:
        return math.hypot(a[0] - b[0], a[1] - b[1]) * self.resolution

    # -- validation ---------------------------------------------------------

    def check_invariants(self) -> List[str]:
        """Return human-readable invariant violations (empty when valid)."""
        problems: List[str] = []
        door_grid = self.door_grid()
        interior = ~self.walls & (door_grid < 0)
        if np.any(interior & (self.room_grid < 0)):
            problems.append("interior cell without a room")
        if np.any((self.room_grid >= 0) & self.walls):
            problems.append("room cell on a wall")
        h, w = self.height, self.width
        for door in self.doors:
            touching = set()
            for r, c in door.blocked_cells:
                for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < h and 0 <= cc < w and self.room_grid[rr, cc] >= 0:
                        touching.add(int(self.room_grid[rr, cc]))
            if len(touching) != 2:
                problems.append(f"door {door.id} borders {len(touching)} rooms")
        for obj in self.objects:
            r, c = obj.position
            if self.room_grid[r, c] < 0:
                problems.append(f"object {obj.id} outside rooms")
            if not obj.openable and obj.state != NOT_APPLICABLE:
                problems.append(f"object {obj.id} non-openable with state {obj.state}")
        start = self.agent_start
        if self.walls[start.row, start.col] or self.room_grid[start.row, start.col] < 0:
            problems.append("agent start not on free space")
        if self.footprint_grid()[start.row, start.col] >= 0:
            problems.append("agent start inside furniture")
        return problems

    # -- serialization ------------------------------------------------------

    def to_json(self) -> Dict[str, Any]:
        return {
            "schema": SCHEMA,
            "width": self.width,
            "height": self.height,
            "resolution": self.resolution,
            "walls": ["".join("#" if v else "." for v in row) for row in self.walls],
            "room_grid": self.room_grid.tolist(),
            "rooms": [{"id": r.id, "label": r.label} for r in self.rooms],
            "doors": [
                {
                    "id": d.id,
                    "center": list(d.center),
                    "blocked_cells": [list(c) for c in d.blocked_cells],
                    "state": d.state,
                    "rooms": list(d.rooms),
                }
                for d in self.doors
            ],
            "objects": [
                {
                    "id": o.id,
                    "category": o.category,
                    "position": list(o.position),
                    "footprint": [list(c) for c in o.footprint],
                    "openable": o.openable,
                    "state": o.state,
                    "contains": list(o.contains),
                    "on_top_of": o.on_top_of,
                    "inside_of": o.inside_of,
                    "volume_class": o.volume_class,
                }
                for o in self.objects
            ],
            "agent_start": self.agent_start.to_json(),
        }

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "WorldSpec":
        if data.get("schema") != SCHEMA:
            raise SchemaError(f"schema: expected {SCHEMA!r}, got {data.get('schema')!r}")
        try:
            walls = np.array([[ch == "#" for ch in row] for row in data["walls"]], dtype=bool)
            room_grid = np.array(data["room_grid"], dtype=np.int32)
            doors = [
                Door(
                    id=int(d["id"]),
                    center=(float(d["center"][0]), float(d["center"][1])),
                    blocked_cells=[(int(r), int(c)) for r, c in d["blocked_cells"]],
                    state=d["state"],
                    rooms=tuple(d.get("rooms", (-1, -1))),
                )
                for d in data["doors"]
            ]
            objects = [
                ObjectSpec(
                    id=int(o["id"]),
                    category=o["category"],
                    position=(int(o["position"][0]), int(o["position"][1])),
                    footprint=[(int(r), int(c)) for r, c in o["footprint"]],
                    openable=bool(o["openable"]),
                    state=o["state"],
                    contains=[int(x) for x in o["contains"]],
                    on_top_of=o["on_top_of"],
                    inside_of=o["inside_of"],
                    volume_class=o["volume_class"],
                )
                for o in data["objects"]
            ]
            spec = cls(
                width=int(data["width"]),
                height=int(data["height"]),
                walls=walls,
                room_grid=room_grid,
                rooms=[GtRoom(int(r["id"]), r["label"]) for r in data["rooms"]],
                doors=doors,
                objects=objects,
                agent_start=Pose.from_json(data["agent_start"]),
                resolution=float(data["resolution"]),
            )
        except KeyError as exc:
            raise SchemaError(f"missing field {exc.args[0]!r}") from exc
        if walls.shape != (spec.height, spec.width):
            raise SchemaError("walls: shape does not match width/height")
        if room_grid.shape != (spec.height, spec.width):
            raise SchemaError("room_grid: shape does not match width/height")
        return spec


@dataclass
class Episode:
    world: WorldSpec
    target_category: str
    seed: int

    def to_json(self) -> Dict[str, Any]:
        return {
            "schema": SCHEMA,
            "kind": "episode",
            "target_category": self.target_category,
            "seed": self.seed,
            "world": self.world.to_json(),
        }

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "Episode":
        if data.get("schema") != SCHEMA or data.get("kind") != "episode":
            raise SchemaError("schema: expected a world.v1 episode document")
        return cls(WorldSpec.from_json(data["world"]), data["target_category"], int(data["seed"]))

    def save(self, path: Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path: Path) -> "Episode":
        return cls.from_json(json.loads(Path(path).read_text()))
