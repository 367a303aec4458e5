"""Low-level simulator: pose updates, magic articulation, ray-cast sensing."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from ..grid import SQRT2
from .model import CLOSED, OPEN, Cell, ObjectSpec, Pose, WorldSpec

SENSOR_RANGE_M = 5.0
FIELD_OF_VIEW = math.radians(120.0)
INTERACTION_RADIUS_M = 1.5
INTERACTION_COST = 30
MOTION_COST = 1
# minimum visible footprint cells before an instance counts as detected
MIN_CELLS = {"small": 1, "large": 2}


@dataclass(frozen=True)
class Action:
    kind: str  # forward | turn_left | turn_right | open | close | done
    arg: Optional[float] = None

    @classmethod
    def forward(cls) -> "Action":
        return cls("forward")

    @classmethod
    def turn_left(cls, theta: float) -> "Action":
        return cls("turn_left", float(theta))

    @classmethod
    def turn_right(cls, theta: float) -> "Action":
        return cls("turn_right", float(theta))

    @classmethod
    def open(cls, oid: int) -> "Action":
        return cls("open", oid)

    @classmethod
    def close(cls, oid: int) -> "Action":
        return cls("close", oid)

    @classmethod
    def done(cls) -> "Action":
        return cls("done")

    @property
    def is_interaction(self) -> bool:
        return self.kind in ("open", "close")


@dataclass
class Detection:
    id: int
    category: str
    state: str
    position: Cell
    volume_class: str
    parent: Optional[int] = None
    relation: Optional[str] = None  # on_top | inside


@dataclass
class Observation:
    pose: Pose
    cells: np.ndarray  # (N, 2) int
    occupied: np.ndarray  # (N,) bool
    instance: np.ndarray  # (N,) int, -1 for none
    detections: Dict[int, Detection] = field(default_factory=dict)
    moved: bool = False
    failure: Optional[str] = None
    distance_m: float = 0.0

    def records(self) -> Iterator[Tuple[Cell, bool, int, Optional[str], Optional[str]]]:
        """(cell, occupied, instance id, category, articulation state) per visible cell."""
        for (r, c), occ, iid in zip(self.cells.tolist(), self.occupied.tolist(), self.instance.tolist()):
            det = self.detections.get(iid)
            yield (r, c), occ, iid, det.category if det else None, det.state if det else None


@dataclass
class WorldState:
    spec: WorldSpec
    pose: Pose
    door_states: Dict[int, str]
    object_states: Dict[int, str]
    occupied: np.ndarray
    instance_grid: np.ndarray
    done: bool = False

    def state_of(self, iid: int) -> Optional[str]:
        if iid in self.door_states:
            return self.door_states[iid]
        return self.object_states.get(iid)

    def fingerprint(self) -> Tuple:
        return (
            self.pose,
            tuple(sorted(self.door_states.items())),
            tuple(sorted(self.object_states.items())),
        )


def initial_state(spec: WorldSpec) -> WorldState:
    door_states = {d.id: d.state for d in spec.doors}
    object_states = {o.id: o.state for o in spec.objects}
    occ, inst = _occupancy(spec, door_states)
    return WorldState(spec, spec.agent_start, door_states, object_states, occ, inst)


def _occupancy(spec: WorldSpec, door_states: Dict[int, str]) -> Tuple[np.ndarray, np.ndarray]:
    occ = spec.walls.copy()
    inst = spec.footprint_grid()
    occ |= inst >= 0
    for door in spec.doors:
        for r, c in door.blocked_cells:
            inst[r, c] = door.id
            if door_states[door.id] == CLOSED:
                occ[r, c] = True
    return occ, inst


def snap_heading(theta: float) -> Tuple[int, int]:
    k = int(round(theta / (math.pi / 4))) % 8
    angle = k * math.pi / 4
    return int(round(math.sin(angle))), int(round(math.cos(angle)))


def _wrap(theta: float) -> float:
    return math.atan2(math.sin(theta), math.cos(theta))


def object_position(spec: WorldSpec, iid: int) -> Optional[Tuple[float, float]]:
    door = spec.door_by_id(iid)
    if door is not None:
        return door.center
    obj = spec.object_by_id(iid)
    if obj is not None:
        return (float(obj.position[0]), float(obj.position[1]))
    return None


def in_interaction_range(state: WorldState, iid: int) -> bool:
    pos = object_position(state.spec, iid)
    if pos is None:
        return False
    return state.spec.distance_m(state.pose.cell, pos) <= INTERACTION_RADIUS_M + 1e-9


def step(state: WorldState, action: Action) -> Tuple[WorldState, Observation, int]:
    """Apply one low-level action and sense from the resulting pose."""
    if state.done:
        return state, _failed(state, "episode finished"), 0
    kind = action.kind
    if kind == "forward":
        dr, dc = snap_heading(state.pose.heading)
        r, c = state.pose.row + dr, state.pose.col + dc
        h, w = state.occupied.shape
        if not (0 <= r < h and 0 <= c < w) or state.occupied[r, c]:
            obs = sense(state)
            obs.failure = "blocked"
            return state, obs, MOTION_COST
        new = replace(state, pose=Pose(r, c, state.pose.heading))
        obs = sense(new)
        obs.moved = True
        obs.distance_m = (SQRT2 if dr and dc else 1.0) * state.spec.resolution
        return new, obs, MOTION_COST
    if kind in ("turn_left", "turn_right"):
        theta = float(action.arg or 0.0)
        sign = 1.0 if kind == "turn_left" else -1.0
        new = replace(state, pose=Pose(state.pose.row, state.pose.col, _wrap(state.pose.heading + sign * theta)))
        return new, sense(new), MOTION_COST
    if kind in ("open", "close"):
        return _articulate(state, int(action.arg), kind)
    if kind == "done":
        new = replace(state, done=True)
        return new, sense(new), 0
    raise ValueError(f"unknown action {kind!r}")


def _articulate(state: WorldState, iid: int, kind: str) -> Tuple[WorldState, Observation, int]:
    spec = state.spec
    current = state.state_of(iid)
    if current is None:
        return state, _failed(state, "no such object"), INTERACTION_COST
    obj = spec.object_by_id(iid)
    if obj is not None and not obj.openable:
        return state, _failed(state, "not openable"), INTERACTION_COST
    if not in_interaction_range(state, iid):
        return state, _failed(state, "out of reach"), INTERACTION_COST
    target = OPEN if kind == "open" else CLOSED
    if current == target:
        return state, _failed(state, f"already {target}"), INTERACTION_COST
    if iid in state.door_states:
        doors = dict(state.door_states)
        doors[iid] = target
        occ, inst = _occupancy(spec, doors)
        if occ[state.pose.row, state.pose.col]:
            return state, _failed(state, "agent in door frame"), INTERACTION_COST
        new = replace(state, door_states=doors, occupied=occ, instance_grid=inst)
    else:
        objs = dict(state.object_states)
        objs[iid] = target
        new = replace(state, object_states=objs)
    return new, sense(new), INTERACTION_COST


def _failed(state: WorldState, reason: str) -> Observation:
    obs = sense(state)
    obs.failure = reason
    return obs


def _parent_chain_open(state: WorldState, obj: ObjectSpec) -> bool:
    spec = state.spec
    cur = obj
    while cur.inside_of is not None or cur.on_top_of is not None:
        if cur.inside_of is not None:
            if state.object_states.get(cur.inside_of) != OPEN:
                return False
            parent = spec.object_by_id(cur.inside_of)
        else:
            parent = spec.object_by_id(cur.on_top_of)
        if parent is None:
            return False
        cur = parent
    return True


def _root(spec: WorldSpec, obj: ObjectSpec) -> ObjectSpec:
    cur = obj
    while True:
        pid = cur.inside_of if cur.inside_of is not None else cur.on_top_of
        if pid is None:
            return cur
        cur = spec.object_by_id(pid)


def visible_mask(occupied: np.ndarray, pose: Pose, resolution: float,
                 fov: float = FIELD_OF_VIEW, range_m: float = SENSOR_RANGE_M) -> np.ndarray:
    """Cells hit by rays from ``pose`` inside the field of view, stopping at the first occupied cell."""
    h, w = occupied.shape
    reach = range_m / resolution
    n_rays = int(math.ceil(fov * reach)) + 1  # ~1 cell spacing at max range
    angles = pose.heading + np.linspace(-fov / 2, fov / 2, n_rays)
    steps = np.arange(0.0, reach + 1e-9, 0.5)
    rr = np.rint(pose.row + np.sin(angles)[:, None] * steps[None, :]).astype(np.int64)
    cc = np.rint(pose.col + np.cos(angles)[:, None] * steps[None, :]).astype(np.int64)
    inside = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
    rr_c = np.clip(rr, 0, h - 1)
    cc_c = np.clip(cc, 0, w - 1)
    blocked = occupied[rr_c, cc_c] | ~inside
    # skip the agent's own cell when checking for blockers
    blocked[:, 0] = ~inside[:, 0]
    hit_any = blocked.any(axis=1)
    first = np.where(hit_any, blocked.argmax(axis=1), steps.size)
    take = (np.arange(steps.size)[None, :] <= first[:, None]) & inside
    dist2 = (rr - pose.row) ** 2 + (cc - pose.col) ** 2
    take &= dist2 <= reach * reach
    mask = np.zeros(h * w, dtype=bool)
    mask[(rr * w + cc)[take]] = True
    return mask.reshape(h, w)


def sense(state: WorldState) -> Observation:
    spec = state.spec
    vis = visible_mask(state.occupied, state.pose, spec.resolution)
    rows, cols = np.nonzero(vis)
    cells = np.stack([rows, cols], axis=1)
    occupied = state.occupied[rows, cols]
    instance = state.instance_grid[rows, cols]
    counts: Dict[int, int] = {}
    if instance.size:
        ids, cnt = np.unique(instance[instance >= 0], return_counts=True)
        counts = dict(zip(ids.tolist(), cnt.tolist()))
    detections: Dict[int, Detection] = {}
    for door in spec.doors:
        if counts.get(door.id, 0) >= MIN_CELLS["large"]:
            c = (int(round(door.center[0])), int(round(door.center[1])))
            detections[door.id] = Detection(door.id, "door", state.door_states[door.id], c, "large")
    for obj in spec.objects:
        if obj.is_top_level:
            seen = counts.get(obj.id, 0) >= MIN_CELLS.get(obj.volume_class, 1)
        else:
            root = _root(spec, obj)
            seen = counts.get(root.id, 0) >= 1 and _parent_chain_open(state, obj)
        if seen:
            parent = obj.inside_of if obj.inside_of is not None else obj.on_top_of
            relation = "inside" if obj.inside_of is not None else ("on_top" if obj.on_top_of is not None else None)
            detections[obj.id] = Detection(
                obj.id, obj.category, state.object_states[obj.id], obj.position, obj.volume_class, parent, relation
            )
    return Observation(state.pose, cells, occupied, instance, detections)


def sees_from(state: WorldState, cell: Cell, obj: ObjectSpec) -> bool:
    """Whether an agent standing on ``cell`` and facing ``obj`` would detect it, ignoring closed containers."""
    root = _root(state.spec, obj)
    dr, dc = root.position[0] - cell[0], root.position[1] - cell[1]
    pose = Pose(int(cell[0]), int(cell[1]), math.atan2(dr, dc))
    range_m = min(SENSOR_RANGE_M, (math.hypot(dr, dc) + 3.0) * state.spec.resolution)
    vis = visible_mask(state.occupied, pose, state.spec.resolution, range_m=range_m)
    count = int(np.count_nonzero(vis & (state.instance_grid == root.id)))
    need = MIN_CELLS.get(obj.volume_class, 1) if obj.is_top_level else 1
    return count >= need


def full_rotation(state: WorldState, turns: int = 3) -> Tuple[WorldState, List[Observation], int]:
    """Turn in place through 360 degrees, sensing after every turn."""
    observations = [sense(state)]
    cost = 0
    for _ in range(turns):
        state, obs, c = step(state, Action.turn_left(2 * math.pi / turns))
        observations.append(obs)
        cost += c
    return state, observations, cost
