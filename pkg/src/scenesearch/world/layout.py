"""Procedural rectilinear floor plans: BSP rooms, one door per shared wall."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import ndimage

from ..grid import STRUCT8, clearance_cells, inflation_cells
from .model import CLOSED, NOT_APPLICABLE, DEFAULT_RESOLUTION, Door, GtRoom, ObjectSpec, Pose, WorldSpec
from .priors import PriorTable, default_priors

Rect = Tuple[int, int, int, int]  # r0, r1, c0, c1 (half-open interior)


class LayoutError(RuntimeError):
    pass


@dataclass
class LayoutConfig:
    rooms: Tuple[int, int] = (2, 6)
    room_min_m: float = 3.0
    room_mean_m: float = 4.0
    corridor: str = "random"  # never | always | random
    corridor_width_m: float = 1.35
    wall_cells: int = 2
    door_width_m: float = 1.05
    door_margin_cells: int = 4
    door_keepout_m: float = 1.2
    furniture_gap_m: float = 0.5
    furniture_per_room: Tuple[int, int] = (1, 3)
    inflation_m: float = 0.1
    resolution: float = DEFAULT_RESOLUTION
    max_retries: int = 30
    priors: Optional[PriorTable] = field(default=None, repr=False)

    @classmethod
    def from_dict(cls, data: Dict) -> "LayoutConfig":
        kwargs = dict(data)
        for key in ("rooms", "furniture_per_room"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        kwargs.pop("priors", None)
        return cls(**kwargs)

    def to_dict(self) -> Dict:
        return {
            "rooms": list(self.rooms),
            "room_min_m": self.room_min_m,
            "room_mean_m": self.room_mean_m,
            "corridor": self.corridor,
            "corridor_width_m": self.corridor_width_m,
            "wall_cells": self.wall_cells,
            "door_width_m": self.door_width_m,
            "door_margin_cells": self.door_margin_cells,
            "door_keepout_m": self.door_keepout_m,
            "furniture_gap_m": self.furniture_gap_m,
            "furniture_per_room": list(self.furniture_per_room),
            "inflation_m": self.inflation_m,
            "resolution": self.resolution,
            "max_retries": self.max_retries,
        }


def _cells(m: float, res: float) -> int:
    return int(round(m / res))


def _bsp(region: Rect, n: int, min_c: int, wall: int, rng: np.random.Generator) -> List[Rect]:
    leaves = [region]
    while len(leaves) < n:
        order = sorted(range(len(leaves)), key=lambda i: -((leaves[i][1] - leaves[i][0]) * (leaves[i][3] - leaves[i][2])))
        for i in order:
            r0, r1, c0, c1 = leaves[i]
            h, w = r1 - r0, c1 - c0
            axes = []
            if w >= 2 * min_c + wall:
                axes.append("v")
            if h >= 2 * min_c + wall:
                axes.append("h")
            if not axes:
                continue
            if len(axes) == 2:
                axis = "v" if w > h else "h" if h > w else axes[int(rng.integers(2))]
            else:
                axis = axes[0]
            if axis == "v":
                s = int(rng.integers(c0 + min_c, c1 - min_c - wall + 1))
                parts = [(r0, r1, c0, s), (r0, r1, s + wall, c1)]
            else:
                s = int(rng.integers(r0 + min_c, r1 - min_c - wall + 1))
                parts = [(r0, s, c0, c1), (s + wall, r1, c0, c1)]
            leaves[i : i + 1] = parts
            break
        else:
            raise LayoutError("region too small to split further")
    return leaves


def _shared_segment(a: Rect, b: Rect, wall: int) -> Optional[Tuple[str, int, int, int]]:
    """(axis, wall_start, lo, hi) if rooms a and b face each other across one wall."""
    if a[3] + wall == b[2] or b[3] + wall == a[2]:
        lo, hi = max(a[0], b[0]), min(a[1], b[1])
        start = a[3] if a[3] + wall == b[2] else b[3]
        return ("v", start, lo, hi)
    if a[1] + wall == b[0] or b[1] + wall == a[0]:
        lo, hi = max(a[2], b[2]), min(a[3], b[3])
        start = a[1] if a[1] + wall == b[0] else b[1]
        return ("h", start, lo, hi)
    return None


def _place_rooms(cfg: LayoutConfig, n: int, rng: np.random.Generator) -> Tuple[int, int, List[Rect], Optional[int]]:
    res = cfg.resolution
    wall = cfg.wall_cells
    min_c = _cells(cfg.room_min_m, res)
    use_corridor = cfg.corridor == "always" or (cfg.corridor == "random" and n >= 4 and rng.random() < 0.35)
    use_corridor = use_corridor and n >= 3
    side = rng.uniform(cfg.room_min_m, 2 * cfg.room_mean_m - cfg.room_min_m)
    side = max(side, cfg.room_min_m)
    if use_corridor:
        corr = _cells(cfg.corridor_width_m, res)
        top = (n - 1) // 2 + (n - 1) % 2
        bottom = n - 1 - top
        width_m = max(top, bottom) * side * rng.uniform(0.9, 1.15)
        W = max(_cells(width_m, res), max(top, bottom) * (min_c + wall))
        hh = max(_cells(side * rng.uniform(0.9, 1.2), res), min_c)
        H = 2 * hh + corr + 2 * wall
        upper = _bsp((0, hh, 0, W), top, min_c, wall, rng) if top else []
        cr0 = hh + wall
        lower_r0 = cr0 + corr + wall
        lower = _bsp((lower_r0, H, 0, W), bottom, min_c, wall, rng) if bottom else []
        rects = upper + [(cr0, cr0 + corr, 0, W)] + lower
        corridor_index = len(upper)
    else:
        aspect = rng.uniform(1.0, 1.5)
        area = n * side * side
        W = max(_cells(math.sqrt(area * aspect), res), min_c)
        H = max(_cells(area / (W * res) , res), min_c)
        rects = _bsp((0, H, 0, W), n, min_c, wall, rng)
        corridor_index = None
    # shift by the outer wall
    rects = [(r0 + wall, r1 + wall, c0 + wall, c1 + wall) for r0, r1, c0, c1 in rects]
    return H + 2 * wall, W + 2 * wall, rects, corridor_index


def _traversable(walls: np.ndarray, furniture: np.ndarray, infl: int) -> np.ndarray:
    return clearance_cells(walls | furniture) > infl


def generate_layout(seed: int, config: Optional[LayoutConfig] = None) -> WorldSpec:
    """Generate a multi-room layout with furniture and a valid start pose."""
    cfg = config or LayoutConfig()
    priors = cfg.priors or default_priors()
    last_error: Optional[Exception] = None
    for attempt in range(cfg.max_retries):
        rng = np.random.default_rng([seed, attempt])
        try:
            return _generate_once(seed, cfg, priors, rng)
        except LayoutError as exc:
            last_error = exc
    raise LayoutError(f"layout generation failed for seed {seed}: {last_error}")


def _generate_once(seed: int, cfg: LayoutConfig, priors: PriorTable, rng: np.random.Generator) -> WorldSpec:
    res = cfg.resolution
    wall = cfg.wall_cells
    lo, hi = cfg.rooms
    n = int(rng.integers(lo, hi + 1))
    H, W, rects, corridor_index = _place_rooms(cfg, n, rng)

    walls = np.ones((H, W), dtype=bool)
    room_grid = np.full((H, W), -1, dtype=np.int32)
    for i, (r0, r1, c0, c1) in enumerate(rects):
        walls[r0:r1, c0:c1] = False
        room_grid[r0:r1, c0:c1] = i

    # room labels
    labels = [l for l in priors.room_labels() if l != "corridor"] or ["room"]
    order = list(rng.permutation(len(labels)))
    rooms = []
    k = 0
    for i in range(len(rects)):
        if i == corridor_index:
            rooms.append(GtRoom(i, "corridor"))
            continue
        if k and k % len(labels) == 0:
            order = list(rng.permutation(len(labels)))
        rooms.append(GtRoom(i, labels[order[k % len(labels)]]))
        k += 1

    # doors
    dw = _cells(cfg.door_width_m, res)
    margin = cfg.door_margin_cells
    doors: List[Door] = []
    for i in range(len(rects)):
        for j in range(i + 1, len(rects)):
            seg = _shared_segment(rects[i], rects[j], wall)
            if seg is None:
                continue
            axis, start, a, b = seg
            if b - a < dw + 2 * margin:
                continue
            mid = (a + b) // 2
            span = range(mid - dw // 2, mid - dw // 2 + dw)
            if axis == "v":
                cells = [(r, c) for r in span for c in range(start, start + wall)]
                center = (span[0] + (dw - 1) / 2.0, start + (wall - 1) / 2.0)
            else:
                cells = [(r, c) for r in range(start, start + wall) for c in span]
                center = (start + (wall - 1) / 2.0, span[0] + (dw - 1) / 2.0)
            for r, c in cells:
                walls[r, c] = False
            doors.append(Door(len(doors), center, cells, CLOSED, (i, j)))

    if not _rooms_connected(len(rects), doors):
        raise LayoutError("room adjacency graph is disconnected")

    objects = _place_furniture(cfg, priors, rects, rooms, walls, doors, rng)

    infl = inflation_cells(cfg.inflation_m, res)
    furniture = np.zeros_like(walls)
    for o in objects:
        for r, c in o.footprint:
            furniture[r, c] = True
    trav = _traversable(walls, furniture, infl)
    main = _main_component(trav, doors)
    start = _sample_start(main, room_grid, rng, infl)
    spec = WorldSpec(
        width=W,
        height=H,
        walls=walls,
        room_grid=room_grid,
        rooms=rooms,
        doors=doors,
        objects=objects,
        agent_start=start,
        resolution=res,
    )
    problems = spec.check_invariants()
    if problems:
        raise LayoutError("; ".join(problems))
    return spec


def _rooms_connected(n: int, doors: List[Door]) -> bool:
    adj: Dict[int, List[int]] = {i: [] for i in range(n)}
    for d in doors:
        a, b = d.rooms
        adj[a].append(b)
        adj[b].append(a)
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == n


def _main_component(trav: np.ndarray, doors: List[Door]) -> np.ndarray:
    labels, count = ndimage.label(trav, structure=STRUCT8)
    if count == 0:
        raise LayoutError("no traversable space")
    if doors:
        r, c = (int(round(x)) for x in doors[0].center)
        lab = labels[r, c]
        if lab == 0:
            raise LayoutError("door frame not traversable")
    else:
        sizes = np.bincount(labels.ravel())
        sizes[0] = 0
        lab = int(np.argmax(sizes))
    return labels == lab


def _sample_start(main: np.ndarray, room_grid: np.ndarray, rng: np.random.Generator, infl: int) -> Pose:
    cand = np.argwhere(main & (room_grid >= 0))
    if len(cand) == 0:
        raise LayoutError("no start cell")
    r, c = cand[int(rng.integers(len(cand)))]
    heading = float(rng.integers(8)) * math.pi / 4
    return Pose(int(r), int(c), heading)


def _place_furniture(
    cfg: LayoutConfig,
    priors: PriorTable,
    rects: List[Rect],
    rooms: List[GtRoom],
    walls: np.ndarray,
    doors: List[Door],
    rng: np.random.Generator,
) -> List[ObjectSpec]:
    res = cfg.resolution
    infl = inflation_cells(cfg.inflation_m, res)
    gap = _cells(cfg.furniture_gap_m, res)
    keepout = cfg.door_keepout_m / res
    H, W = walls.shape
    rows, cols = np.mgrid[:H, :W]
    near_door = np.zeros((H, W), dtype=bool)
    for d in doors:
        near_door |= (rows - d.center[0]) ** 2 + (cols - d.center[1]) ** 2 <= keepout**2
    furniture = np.zeros((H, W), dtype=bool)
    objects: List[ObjectSpec] = []
    next_id = len(doors)
    arc_lo, arc_hi = 0.8 / res, 1.2 / res

    for room, rect in zip(rooms, rects):
        weights = priors.furniture_weights(room.label)
        if not weights:
            raise LayoutError(f"no furniture prior for room label {room.label!r}")
        cats = sorted(weights)
        p = np.array([weights[c] for c in cats], dtype=float)
        p /= p.sum()
        lo, hi = cfg.furniture_per_room
        want = int(rng.integers(lo, hi + 1))
        placed = 0
        for _ in range(want * 8):
            if placed >= want:
                break
            cat = cats[int(rng.choice(len(cats), p=p))]
            fp = _try_footprint(priors.size_m(cat), rect, res, rng)
            if fp is None:
                continue
            r0, r1, c0, c1 = fp
            block = np.zeros_like(furniture)
            block[r0:r1, c0:c1] = True
            if (block & near_door).any():
                continue
            if gap and (ndimage.binary_dilation(block, iterations=gap) & furniture).any():
                continue
            trial = furniture | block
            trav = _traversable(walls, trial, infl)
            try:
                main = _main_component(trav, doors)
            except LayoutError:
                continue
            pos = ((r0 + r1 - 1) // 2, (c0 + c1 - 1) // 2)
            ok = True
            for obj in objects + [ObjectSpec(-1, cat, pos, [])]:
                d2 = (rows - obj.position[0]) ** 2 + (cols - obj.position[1]) ** 2
                if not (main & (d2 >= arc_lo**2) & (d2 <= arc_hi**2)).any():
                    ok = False
                    break
            if ok:
                for rm_rect in rects:
                    a0, a1, b0, b1 = rm_rect
                    if not main[a0:a1, b0:b1].any():
                        ok = False
                        break
            if not ok:
                continue
            furniture = trial
            footprint = [(r, c) for r in range(r0, r1) for c in range(c0, c1)]
            openable = priors.is_openable(cat)
            objects.append(
                ObjectSpec(
                    id=next_id,
                    category=cat,
                    position=pos,
                    footprint=footprint,
                    openable=openable,
                    state=CLOSED if openable else NOT_APPLICABLE,
                    volume_class="large",
                )
            )
            next_id += 1
            placed += 1
            if cat != "chair":
                p[cats.index(cat)] = 0.0
                if p.sum() <= 0:
                    break
                p /= p.sum()
        if placed == 0:
            raise LayoutError(f"could not place furniture in room {room.id}")
    return objects


def _try_footprint(size_m: Tuple[float, float], rect: Rect, res: float, rng: np.random.Generator) -> Optional[Rect]:
    depth = max(2, _cells(size_m[0], res))
    width = max(2, _cells(size_m[1], res))
    r0, r1, c0, c1 = rect
    side = int(rng.integers(4))
    if side in (0, 1):  # against top / bottom wall
        if c1 - c0 < width or r1 - r0 < depth:
            return None
        x = int(rng.integers(c0, c1 - width + 1))
        if side == 0:
            return (r0, r0 + depth, x, x + width)
        return (r1 - depth, r1, x, x + width)
    if r1 - r0 < width or c1 - c0 < depth:
        return None
    y = int(rng.integers(r0, r1 - width + 1))
    if side == 2:
        return (y, y + width, c0, c0 + depth)
    return (y, y + width, c1 - depth, c1)
