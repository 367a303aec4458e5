"""Object-centric subpolicies executed through low-level simulator steps."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..grid import cells_within, clearance_cells, disk_offsets, inflation_cells, visible_region
from ..mapping import BevMap, Frontier, ViewpointIndex, integrate
from ..world.model import CLOSED, OPEN, Episode
from ..world.sim import (
    INTERACTION_COST,
    INTERACTION_RADIUS_M,
    MOTION_COST,
    Action,
    Observation,
    initial_state,
    sense,
    step,
)
from .planning import astar, distance_map, traversable

ARC_RADIUS_M = 1.0
EXPLORE_RADIUS_M = 0.5
NODE_RADIUS_CELLS = 2.0
MAX_REPLANS = 10
INFLATION_M = 0.1

SUCCESS = "success"
FAILURE = "failure"
INVALID = "invalid argument"


class Interrupted(Exception):
    """Raised inside a subpolicy once the search target has been observed."""


@dataclass
class StepLog:
    actions: List[str] = field(default_factory=list)
    path: List[Tuple[int, int]] = field(default_factory=list)
    replans: int = 0

    @property
    def motion(self) -> int:
        return sum(1 for a in self.actions if a not in ("open", "close", "done"))

    @property
    def interactions(self) -> int:
        return sum(1 for a in self.actions if a in ("open", "close"))

    @property
    def cost(self) -> int:
        return self.motion * MOTION_COST + self.interactions * INTERACTION_COST


class Executor:
    """Runs subpolicies for one episode and keeps the agent's map belief."""

    def __init__(self, episode: Episode, stop_on_target: bool = False,
                 inflation_m: float = INFLATION_M, max_replans: int = MAX_REPLANS) -> None:
        spec = episode.world
        self.episode = episode
        self.target = episode.target_category
        self.state = initial_state(spec)
        self.bev = BevMap.empty(spec.height, spec.width, spec.resolution)
        self.vpi = ViewpointIndex()
        self.stop_on_target = stop_on_target
        self.inflation_m = inflation_m
        self.max_replans = max_replans
        self.motion = 0
        self.interactions = 0
        self.distance_m = 0.0
        self.target_seen = False
        self.log = StepLog()
        self.exhausted: set = set()  # frontier cells already visited without being resolved
        self._guard = disk_offsets(inflation_cells(inflation_m, spec.resolution))

    # -- bookkeeping -----------------------------------------------------------

    @property
    def resolution(self) -> float:
        return self.bev.resolution

    @property
    def cell(self) -> Tuple[int, int]:
        return self.state.pose.cell

    @property
    def weighted_cost(self) -> int:
        return self.motion * MOTION_COST + self.interactions * INTERACTION_COST

    def begin_step(self) -> StepLog:
        self.log = StepLog(path=[self.cell])
        return self.log

    def observe(self, obs: Observation) -> None:
        integrate(self.bev, self.vpi, obs)
        if not self.target_seen and any(d.category == self.target for d in obs.detections.values()):
            self.target_seen = True

    def act(self, action: Action) -> Observation:
        self.state, obs, cost = step(self.state, action)
        self.log.actions.append(action.kind)
        if action.is_interaction:
            self.interactions += 1
        elif action.kind != "done":
            self.motion += 1
        if obs.moved:
            self.distance_m += obs.distance_m
            self.log.path.append(self.cell)
        self.observe(obs)
        if self.stop_on_target and self.target_seen:
            raise Interrupted()
        return obs

    def rotate(self, turns: int = 3) -> None:
        for _ in range(turns):
            self.act(Action.turn_left(2 * math.pi / turns))

    def initialize(self) -> None:
        """Sense, then turn once around in place."""
        self.observe(sense(self.state))
        self.rotate(3)

    # -- motion ----------------------------------------------------------------

    def face(self, point: Tuple[float, float]) -> None:
        r, c = self.cell
        if (point[0], point[1]) == (r, c):
            return
        want = math.atan2(point[0] - r, point[1] - c)
        delta = math.atan2(math.sin(want - self.state.pose.heading), math.cos(want - self.state.pose.heading))
        if abs(delta) < 1e-9:
            return
        self.act(Action.turn_left(delta) if delta > 0 else Action.turn_right(-delta))

    def _blocked(self, cell: Tuple[int, int]) -> bool:
        h, w = self.bev.shape
        rr = self._guard[:, 0] + cell[0]
        cc = self._guard[:, 1] + cell[1]
        ok = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
        return bool(self.bev.occupied[rr[ok], cc[ok]].any())

    def follow(self, path: Sequence[Tuple[int, int]]) -> bool:
        """Walk a path cell by cell; False as soon as it needs replanning."""
        for nxt in path[1:]:
            if self._blocked(nxt):
                return False
            self.face(nxt)
            obs = self.act(Action.forward())
            if obs.failure:
                return False
        return True

    def goto(self, goal_fn: Callable[[np.ndarray], np.ndarray], done_fn: Callable[[], bool],
             center: Optional[Tuple[float, float]] = None, radius: float = 0.0) -> bool:
        """Plan on the known map, fall back to optimistic unknown, replan on blockage."""
        for attempt in range(self.max_replans + 1):
            if done_fn():
                return True
            if attempt:
                self.log.replans += 1
            path = None
            for optimistic in (False, True):
                trav = traversable(self.bev, self.inflation_m, optimistic)
                goal = goal_fn(trav)
                path = astar(trav, self.cell, goal, center, radius)
                if path is not None:
                    break
            if path is None:
                return done_fn()
            self.follow(path)
        return done_fn()

    def distance_to(self, point: Tuple[float, float]) -> float:
        r, c = self.cell
        return math.hypot(point[0] - r, point[1] - c) * self.resolution

    def _arc_candidates(self, obj: Tuple[float, float], trav: np.ndarray) -> List[Tuple[int, int]]:
        """Cells on the approach arc ranked by clearance, then by angle to the approach direction."""
        radius = ARC_RADIUS_M / self.resolution
        h, w = trav.shape
        rows, cols = np.ogrid[:h, :w]
        d = np.sqrt((rows - obj[0]) ** 2 + (cols - obj[1]) ** 2)
        ring = trav & (np.abs(d - radius) <= 0.5)
        rr, cc = np.nonzero(ring)
        if rr.size == 0:
            return []
        clear = clearance_cells(self.bev.occupied | self.bev.unknown)[rr, cc]
        ar, ac = self.cell
        approach = math.atan2(ar - obj[0], ac - obj[1])
        ang = np.arctan2(rr - obj[0], cc - obj[1]) - approach
        ang = np.abs(np.arctan2(np.sin(ang), np.cos(ang)))
        # the half circle facing the agent first, the far side only as a fallback
        behind = ang > math.pi / 2 + 1e-9
        order = np.lexsort((cc, rr, ang, -clear, behind))
        return [(int(rr[i]), int(cc[i])) for i in order]

    def _sight_mask(self, position: Tuple[float, float], candidates: np.ndarray) -> np.ndarray:
        """Candidates with a line to ``position`` over known free space; failing that, a line
        that at least avoids known obstacles."""
        reach = INTERACTION_RADIUS_M / self.resolution
        near = candidates & cells_within(candidates.shape, position, reach + 1.0)
        pr, pc = int(round(position[0])), int(round(position[1]))
        sid = int(self.bev.semantic[pr, pc])
        own = self.bev.semantic == sid if sid >= 0 else None
        strict = visible_region(self.bev.occupied | self.bev.unknown, near, position, own)
        return strict if strict.any() else visible_region(self.bev.occupied, near, position, own)

    # -- subpolicies -----------------------------------------------------------

    def navigate(self, position: Tuple[float, float], node_cell: Optional[Tuple[int, int]] = None,
                 approach: Optional[Tuple[int, int]] = None) -> str:
        """Go to the object's graph node, then to the best free arc cell, then face it.

        An explicit ``approach`` cell replaces both stages when it can be reached.
        """
        reach = INTERACTION_RADIUS_M / self.resolution
        in_reach = lambda: self.distance_to(position) <= INTERACTION_RADIUS_M + 1e-9
        if approach is not None:
            approach = (int(approach[0]), int(approach[1]))
            if self.goto(lambda t: _single(t.shape, approach), lambda: self.cell == approach, approach, 0.0):
                self.face(position)
                return SUCCESS if in_reach() else FAILURE
        if node_cell is not None:
            self.goto(lambda t: cells_within(t.shape, node_cell, NODE_RADIUS_CELLS) & t,
                      lambda: math.hypot(self.cell[0] - node_cell[0], self.cell[1] - node_cell[1]) <= NODE_RADIUS_CELLS,
                      node_cell, NODE_RADIUS_CELLS)
        trav = traversable(self.bev, self.inflation_m)
        dist = distance_map(trav, self.cell)
        sees = self._sight_mask(position, trav)
        arc = [c for c in self._arc_candidates(position, trav & sees) if np.isfinite(dist[c])]
        if arc:
            target = arc[0]
            self.goto(lambda t: _single(t.shape, target), lambda: self.cell == target, target, 0.0)
        if not in_reach():
            def region(t: np.ndarray) -> np.ndarray:
                near = cells_within(t.shape, position, reach) & t
                seen = near & self._sight_mask(position, near)
                return seen if seen.any() else near
            self.goto(region, in_reach, position, reach)
        self.face(position)
        return SUCCESS if in_reach() else FAILURE

    def _believe(self, oid: int, state: str) -> None:
        # the agent knows the outcome of its own interaction even without seeing it
        inst = self.bev.instances.get(oid)
        if inst is not None:
            inst.state = state

    def open(self, oid: int, position: Tuple[float, float], node_cell=None, is_door: bool = False,
             approach=None) -> str:
        if self.state.state_of(oid) is None:
            return INVALID
        outcome = self.navigate(position, node_cell, approach)
        if outcome != SUCCESS:
            return FAILURE
        obs = self.act(Action.open(oid))
        if obs.failure:
            return FAILURE
        self._believe(oid, OPEN)
        if is_door:
            centre = (int(round(position[0])), int(round(position[1])))
            self.goto(lambda t: cells_within(t.shape, centre, 1.0) & t,
                      lambda: math.hypot(self.cell[0] - centre[0], self.cell[1] - centre[1]) <= 1.0,
                      centre, 1.0)
        return SUCCESS

    def close(self, oid: int, position: Tuple[float, float], node_cell=None, approach=None) -> str:
        if self.state.state_of(oid) is None:
            return INVALID
        outcome = self.navigate(position, node_cell, approach)
        if outcome != SUCCESS:
            return FAILURE
        obs = self.act(Action.close(oid))
        if obs.failure:
            return FAILURE
        self._believe(oid, CLOSED)
        return SUCCESS

    def explore(self, frontiers: Sequence[Frontier]) -> str:
        """Move to the nearest frontier of a room; success within 0.5 m of its centroid."""
        if not frontiers:
            return INVALID
        radius = EXPLORE_RADIUS_M / self.resolution
        trav = traversable(self.bev, self.inflation_m)
        dist = distance_map(trav, self.cell)
        best, best_key = None, None
        for f in frontiers:
            region = cells_within(trav.shape, f.centroid, radius) & trav
            d = float(dist[region].min()) if region.any() else math.inf
            e = math.hypot(f.centroid[0] - self.cell[0], f.centroid[1] - self.cell[1])
            key = (d, e, f.id)
            if best_key is None or key < best_key:
                best, best_key = f, key
        c = best.centroid
        near = lambda: math.hypot(self.cell[0] - c[0], self.cell[1] - c[1]) <= radius + 1e-9
        self.goto(lambda t: cells_within(t.shape, c, radius) & t, near, c, radius)
        if not near():
            return FAILURE
        self.exhausted.update(best.cells)
        self.rotate(3)
        return SUCCESS

    def live_frontiers(self, frontiers: Sequence[Frontier]) -> List[Frontier]:
        """Drop frontiers that a finished explore could not resolve from up close."""
        return [f for f in frontiers if not set(f.cells) <= self.exhausted]


def _single(shape, cell) -> np.ndarray:
    m = np.zeros(shape, dtype=bool)
    m[cell] = True
    return m
