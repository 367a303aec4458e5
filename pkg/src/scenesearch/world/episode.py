"""Episode enrichment: place small objects per priors, draw a target, pick a start."""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Set, Tuple

import numpy as np
from scipy import ndimage

from ..grid import STRUCT8, cells_within, clearance_cells, inflation_cells, line_of_sight, visible_region
from .model import CLOSED, NOT_APPLICABLE, Episode, ObjectSpec, Pose, WorldSpec
from .priors import PriorTable
from .sim import INTERACTION_RADIUS_M, SENSOR_RANGE_M, full_rotation, initial_state


class EpisodeError(RuntimeError):
    pass


@dataclass
class EnrichConfig:
    items_per_furniture: Tuple[int, int] = (0, 2)
    inside_capacity: int = 3
    extend_priors: bool = True
    max_start_tries: int = 40
    inflation_m: float = 0.1


def gt_traversable(spec: WorldSpec, inflation_m: float = 0.1, doors_open: bool = True) -> np.ndarray:
    """Inflated free space of the ground-truth map (doors open unless told otherwise)."""
    occ = spec.walls | (spec.footprint_grid() >= 0)
    if not doors_open:
        for d in spec.doors:
            if d.state == CLOSED:
                for r, c in d.blocked_cells:
                    occ[r, c] = True
    return clearance_cells(occ) > inflation_cells(inflation_m, spec.resolution)


def reachable_from(trav: np.ndarray, cell: Tuple[int, int]) -> np.ndarray:
    labels, _ = ndimage.label(trav, structure=STRUCT8)
    lab = labels[cell]
    if lab == 0:
        return np.zeros_like(trav)
    return labels == lab


def target_instances(spec: WorldSpec, category: str) -> List[ObjectSpec]:
    return [o for o in spec.objects if o.category == category]


def _root_of(spec: WorldSpec, obj: ObjectSpec) -> ObjectSpec:
    cur = obj
    while True:
        pid = cur.inside_of if cur.inside_of is not None else cur.on_top_of
        if pid is None:
            return cur
        cur = spec.object_by_id(pid)


def target_visible_from_start(spec: WorldSpec, category: str) -> bool:
    """Conservative check: sensor sweep or any clear sight line within range."""
    state = initial_state(spec)
    _, observations, _ = full_rotation(state)
    for obs in observations:
        if any(d.category == category for d in obs.detections.values()):
            return True
    start = spec.agent_start.cell
    reach = SENSOR_RANGE_M / spec.resolution
    for obj in target_instances(spec, category):
        if obj.inside_of is not None:
            continue  # containers start closed
        cells = obj.footprint if obj.is_top_level else _root_of(spec, obj).footprint
        for cell in cells:
            if math.hypot(cell[0] - start[0], cell[1] - start[1]) <= reach and line_of_sight(state.occupied, start, cell):
                return True
    return False


def root_of(spec: WorldSpec, obj: ObjectSpec) -> ObjectSpec:
    return _root_of(spec, obj)


def approach_region(spec: WorldSpec, obj: ObjectSpec, trav: np.ndarray,
                    radius_m: float = INTERACTION_RADIUS_M) -> np.ndarray:
    """Traversable cells within reach of an object that also see it (walls block, doors open)."""
    root = _root_of(spec, obj)
    occ = spec.walls | (spec.footprint_grid() >= 0)
    own = np.zeros_like(occ)
    for cell in root.footprint:
        own[cell] = True
    near = cells_within(trav.shape, root.position, radius_m / spec.resolution) & trav
    return visible_region(occ, near, root.position, own)


def target_reachable(spec: WorldSpec, category: str, inflation_m: float = 0.1) -> bool:
    reach = reachable_from(gt_traversable(spec, inflation_m), spec.agent_start.cell)
    radius = INTERACTION_RADIUS_M / spec.resolution
    rows, cols = np.nonzero(reach)
    for obj in target_instances(spec, category):
        pr, pc = obj.position
        if np.any((rows - pr) ** 2 + (cols - pc) ** 2 <= radius * radius):
            return True
    return False


def enrich_episode(
    layout: WorldSpec, priors: PriorTable, seed: int, config: Optional[EnrichConfig] = None
) -> Episode:
    cfg = config or EnrichConfig()
    rng = np.random.default_rng([seed, 7919])
    spec = copy.deepcopy(layout)
    table = priors.extended() if cfg.extend_priors else priors
    _place_items(spec, table, cfg, rng)

    categories = sorted({o.category for o in spec.objects})
    if not categories:
        raise EpisodeError(f"seed {seed}: no object categories to search for")
    trav = gt_traversable(spec, cfg.inflation_m)
    labels, _ = ndimage.label(trav, structure=STRUCT8)
    start_lab = labels[layout.agent_start.cell]
    pool = np.argwhere((labels == start_lab) & (spec.room_grid >= 0)) if start_lab else np.argwhere(trav)

    order = list(rng.permutation(len(categories)))
    for idx in order:
        target = categories[idx]
        for attempt in range(cfg.max_start_tries):
            if attempt == 0:
                start = layout.agent_start
            else:
                r, c = pool[int(rng.integers(len(pool)))]
                start = Pose(int(r), int(c), float(rng.integers(8)) * math.pi / 4)
            spec.agent_start = start
            if not target_reachable(spec, target, cfg.inflation_m):
                continue
            if target_visible_from_start(spec, target):
                continue
            return Episode(spec, target, seed)
    raise EpisodeError(f"seed {seed}: no feasible target after exhausting categories")


def _place_items(spec: WorldSpec, table: PriorTable, cfg: EnrichConfig, rng: np.random.Generator) -> None:
    next_id = spec.next_instance_id()
    furniture = [o for o in spec.objects if o.is_top_level]
    used_top: Dict[int, Set[Tuple[int, int]]] = {f.id: set() for f in furniture}
    for parent in furniture:
        relations = list(table.relations_for(parent.category))
        if not relations:
            continue
        label = next((r.label for r in spec.rooms if r.id == spec.room_grid[parent.position]), "")
        lo, hi = cfg.items_per_furniture
        want = int(rng.integers(lo, hi + 1))
        placed = 0
        remaining = list(relations)
        while placed < want and remaining:
            w = np.array([table.item_weight(label, item) for _, item in remaining], dtype=float)
            if w.sum() <= 0:
                break
            k = int(rng.choice(len(remaining), p=w / w.sum()))
            relation, item = remaining.pop(k)
            if relation == "on_top":
                free = [c for c in parent.footprint if c not in used_top[parent.id]]
                if not free:
                    continue
                cell = free[int(rng.integers(len(free)))]
                used_top[parent.id].add(cell)
                obj = ObjectSpec(next_id, item, cell, [cell], False, NOT_APPLICABLE, on_top_of=parent.id,
                                 volume_class="small")
            else:
                if len(parent.contains) >= cfg.inside_capacity:
                    continue
                obj = ObjectSpec(next_id, item, parent.position, [parent.position], False, NOT_APPLICABLE,
                                 inside_of=parent.id, volume_class="small")
            if relation == "inside":
                parent.contains.append(next_id)
            spec.objects.append(obj)
            next_id += 1
            placed += 1
