"""The high-level decision loop and its per-episode trace."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, TextIO

import numpy as np

from ..grid import cells_within
from ..mapping import detect_frontiers
from ..scenegraph import SceneGraph, build_scene_graph, door_centers, match_frontiers
from ..textenc import UNPARSED, VERBS, ActionRecord
from ..voronoi import SkeletonError, voronoi_graph
from ..world.episode import approach_region, gt_traversable
from ..world.model import Episode
from ..world.sim import INTERACTION_COST, INTERACTION_RADIUS_M, MOTION_COST
from .actions import HighLevelAction, InvalidAction, available_actions
from .planning import astar, distance_map, path_cost, region_distance, traversable
from .policies import DecisionContext, Policy, PolicyError
from .subpolicies import EXPLORE_RADIUS_M, FAILURE, INVALID, SUCCESS, Executor, Interrupted

TRACE_SCHEMA = "trace.v1"


@dataclass
class Limits:
    max_steps: int = 50
    max_failures: int = 5
    budget: int = 5000
    motion_weight: int = MOTION_COST
    interaction_weight: int = INTERACTION_COST

    def __post_init__(self) -> None:
        for name in ("max_steps", "max_failures", "budget", "motion_weight", "interaction_weight"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class EpisodeResult:
    seed: int
    target: str
    policy: str
    success: bool
    reason: str
    steps: int
    weighted_cost: int
    motion_steps: int
    interactions: int
    distance_m: float
    shortest_m: float
    records: List[ActionRecord] = field(default_factory=list)
    trace: List[Dict] = field(default_factory=list)
    events: List[Dict] = field(default_factory=list)

    @property
    def cost_at_success(self) -> float:
        return float(self.weighted_cost) if self.success else math.inf

    def summary(self) -> Dict:
        return {
            "seed": self.seed, "target": self.target, "policy": self.policy, "success": self.success,
            "reason": self.reason, "steps": self.steps, "weighted_cost": self.weighted_cost,
            "motion_steps": self.motion_steps, "interactions": self.interactions,
            "distance_m": round(self.distance_m, 6), "shortest_m": round(self.shortest_m, 6),
        }


@dataclass
class View:
    sg: SceneGraph
    frontiers: list
    trav: object
    dist: object
    room_distances: Dict[int, float]
    frontier_distances: Dict[int, float]


def perceive(ex: Executor, classifier: Optional[Callable] = None) -> View:
    """Rebuild skeleton, scene graph and frontiers from the current map."""
    bev = ex.bev
    try:
        graph, _ = voronoi_graph(bev, ex.cell, door_centers(bev))
        sg = build_scene_graph(bev, ex.vpi, graph, classifier)
    except SkeletonError:
        sg = SceneGraph()
    frontiers = ex.live_frontiers(detect_frontiers(bev))
    if sg.rooms:
        match_frontiers(frontiers, sg)
    trav = traversable(bev, ex.inflation_m)
    dist = distance_map(trav, ex.cell)
    res = bev.resolution
    room_d = {}
    for r in sg.rooms:
        region = cells_within(trav.shape, sg.graph.cell(r.anchor), 2.0) & trav
        room_d[r.id] = region_distance(dist, region) * res
    front_d = {}
    for f in frontiers:
        region = cells_within(trav.shape, f.centroid, EXPLORE_RADIUS_M / res) & trav
        front_d[f.id] = region_distance(dist, region) * res
    return View(sg, frontiers, trav, dist, room_d, front_d)


def shortest_path_m(episode: Episode, inflation_m: float = 0.1) -> float:
    """Ground-truth shortest path (doors open) from the start to interaction range of any target."""
    spec = episode.world
    trav = gt_traversable(spec, inflation_m, doors_open=True)
    goal = np.zeros_like(trav)
    for obj in spec.objects:
        if obj.category == episode.target_category:
            goal |= approach_region(spec, obj, trav)
    path = astar(trav, spec.agent_start.cell, goal)
    return math.inf if path is None else path_cost(path) * spec.resolution


def _execute(ex: Executor, action: HighLevelAction, view: View) -> str:
    sg = view.sg
    if action.verb == "explore":
        fronts = [f for f in view.frontiers if f.room_id == action.room_id]
        return ex.explore(fronts) if fronts else INVALID
    if action.object_id is None or action.position is None:
        return INVALID
    state = ex.state.state_of(action.object_id)
    known = sg.object(action.object_id)
    believed = known.state if known is not None else state
    if action.verb == "go_to_and_open":
        if believed != "closed":
            return INVALID
        is_door = ex.state.spec.door_by_id(action.object_id) is not None
        return ex.open(action.object_id, action.position, action.node_cell, is_door, action.approach)
    if action.verb == "close":
        if believed != "open":
            return INVALID
        return ex.close(action.object_id, action.position, action.node_cell, action.approach)
    if action.verb == "navigate":
        return ex.navigate(action.position, action.node_cell, action.approach)
    return INVALID


def _anchor(action, ex: Executor, view: View):
    if isinstance(action, InvalidAction):
        return None
    if action.position is not None:
        return (int(round(action.position[0])), int(round(action.position[1])))
    if action.verb == "explore":
        fronts = [f for f in view.frontiers if f.room_id == action.room_id]
        if fronts:
            c = ex.cell
            return min(fronts, key=lambda f: ((f.centroid[0] - c[0]) ** 2 + (f.centroid[1] - c[1]) ** 2, f.id)).centroid
    return ex.cell


def run_episode(episode: Episode, policy: Policy, limits: Optional[Limits] = None,
                classifier: Optional[Callable] = None, trace_file: Optional[TextIO] = None,
                on_step: Optional[Callable[[int, Executor, View], None]] = None) -> EpisodeResult:
    """Initial rotation, then decide / execute until done, the step cap, or getting stuck."""
    limits = limits or Limits()
    ex = Executor(episode, stop_on_target=policy.auto_done)
    policy.reset(episode, episode.seed)
    records: List[ActionRecord] = []
    trace: List[Dict] = []
    events: List[Dict] = []

    def emit(line: Dict) -> None:
        trace.append(line)
        if trace_file is not None:
            trace_file.write(json.dumps(line, sort_keys=True) + "\n")

    emit({"schema": TRACE_SCHEMA, "kind": "episode", "seed": episode.seed, "target": episode.target_category,
          "policy": policy.name, "start": episode.world.agent_start.to_json()})

    def emit_step(i: int, call: str, outcome: str, prompt_hash=None, interrupted=False, replans=0) -> None:
        log = ex.log
        emit({
            "schema": TRACE_SCHEMA, "kind": "step", "step": i, "prompt_hash": prompt_hash, "action": call,
            "outcome": outcome, "cost": log.motion * limits.motion_weight + log.interactions * limits.interaction_weight,
            "motion": log.motion, "interactions": log.interactions, "low_level": list(log.actions),
            "pose": ex.state.pose.to_json(), "path": [list(c) for c in log.path],
            "interrupted": interrupted, "replans": replans, "total_cost": weighted(),
        })

    def weighted() -> int:
        return ex.motion * limits.motion_weight + ex.interactions * limits.interaction_weight

    ex.begin_step()
    try:
        ex.initialize()
    except Interrupted:
        pass
    emit_step(0, "initialize()", SUCCESS)

    success, reason, steps = False, "step limit", 0
    consecutive = 0
    retry_call: Optional[str] = None
    if policy.auto_done and ex.target_seen:
        success, reason = True, "done"
    else:
        for i in range(1, limits.max_steps + 1):
            steps = i
            view = perceive(ex, classifier)
            if on_step is not None:
                on_step(i, ex, view)
            actions = available_actions(view.sg, view.frontiers) if view.sg.rooms else [HighLevelAction("done")]
            ctx = DecisionContext(i, episode.target_category, view.sg, view.frontiers, actions, view.dist, view.trav,
                                  ex.cell, ex.resolution, view.room_distances, view.frontier_distances,
                                  records, retry_call, ex.state)
            ex.begin_step()
            before = ex.state.fingerprint()
            try:
                decision = policy.decide(ctx)
            except PolicyError as exc:
                reason = f"policy error: {exc}"
                events.append({"step": i, "kind": "policy_error", "detail": str(exc)})
                emit_step(i, "none", FAILURE)
                break
            for ev in view.sg.events:
                events.append({"step": i, "kind": ev.kind, "detail": ev.detail})
            action = decision.action
            interrupted = False
            if isinstance(action, InvalidAction):
                outcome = INVALID
                rec = ActionRecord(_verb_of(action.call_text), _args_of(action.call_text))
            elif action.verb == "done":
                rec = ActionRecord("done")
                rec.set_outcome(SUCCESS if ex.target_seen else FAILURE)
                records.append(rec)
                emit_step(i, "done()", rec.outcome, decision.prompt_hash)
                success, reason = ex.target_seen, "done"
                break
            else:
                rec = ActionRecord(action.verb, tuple(a for a in (action.room, action.obj) if a),
                                   _anchor(action, ex, view), action.obj)
                try:
                    outcome = _execute(ex, action, view)
                except Interrupted:
                    outcome, interrupted = SUCCESS, True
            rec.set_outcome(outcome)
            records.append(rec)
            emit_step(i, action.call(), outcome, decision.prompt_hash, interrupted, ex.log.replans)
            if policy.auto_done and ex.target_seen:
                success, reason = True, "done"
                break
            changed = ex.state.fingerprint() != before
            consecutive = consecutive + 1 if (outcome != SUCCESS and not changed) else 0
            retry_call = action.call() if outcome == INVALID else None
            if consecutive >= limits.max_failures:
                reason = "stuck"
                break
    result = EpisodeResult(
        episode.seed, episode.target_category, policy.name, success, reason, steps, weighted(), ex.motion,
        ex.interactions, ex.distance_m, shortest_path_m(episode, ex.inflation_m), records, trace, events,
    )
    emit({"schema": TRACE_SCHEMA, "kind": "result", **result.summary()})
    return result


def _verb_of(call: str) -> str:
    verb = call.split("(", 1)[0].strip().lower()
    return verb if verb in VERBS and "(" in call else UNPARSED


def _args_of(call: str) -> tuple:
    if _verb_of(call) == UNPARSED:
        return (call,)
    inner = call.split("(", 1)[1].rsplit(")", 1)[0]
    return tuple(a.strip() for a in inner.split(",") if a.strip())


def replay_cost(trace: List[Dict], motion_weight: int = MOTION_COST, interaction_weight: int = INTERACTION_COST) -> int:
    """Weighted cost recomputed from the low-level actions logged in a trace."""
    total = 0
    for line in trace:
        if line.get("kind") != "step":
            continue
        for kind in line["low_level"]:
            if kind in ("open", "close"):
                total += interaction_weight
            elif kind != "done":
                total += motion_weight
    return total


def load_trace(path: Path) -> List[Dict]:
    lines = [json.loads(x) for x in Path(path).read_text().splitlines() if x.strip()]
    for n, line in enumerate(lines):
        if line.get("schema") != TRACE_SCHEMA:
            raise ValueError(f"line {n + 1}: schema: expected {TRACE_SCHEMA!r}")
    return lines
