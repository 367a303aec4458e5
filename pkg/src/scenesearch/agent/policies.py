"""High-level policies: scripted baselines, a ground-truth oracle, and the chat planner."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..grid import cells_within
from ..mapping import Frontier
from ..scenegraph import SceneGraph
from ..textenc import ActionRecord, build_prompt, realign_history, retry_message
from ..world.episode import approach_region, gt_traversable
from ..world.model import CLOSED, Episode, ObjectSpec
from ..world.sim import INTERACTION_RADIUS_M, sees_from
from .actions import Decision, HighLevelAction, InvalidAction, parse_reply
from .chat import ChatClient, ChatError
from .planning import astar, region_distance

HISTORY_LENGTH = 8


class PolicyError(RuntimeError):
    """The decision backend failed hard; the episode cannot continue."""


@dataclass
class DecisionContext:
    step: int
    target: str
    sg: SceneGraph
    frontiers: List[Frontier]
    actions: List[HighLevelAction]
    dist: np.ndarray  # path length in cells from the agent over the known map
    trav: np.ndarray
    agent_cell: Tuple[int, int]
    resolution: float
    room_distances: Dict[int, float]
    frontier_distances: Dict[int, float]
    history: List[ActionRecord]
    retry_call: Optional[str] = None
    world: Optional[object] = None  # ground-truth state, only read by the oracle

    def action_distance(self, action: HighLevelAction) -> float:
        """Known-map path length in meters to where the action would start acting."""
        if action.verb == "explore":
            radius = 0.5 / self.resolution
            ds = [region_distance(self.dist, cells_within(self.trav.shape, f.centroid, radius) & self.trav)
                  for f in self.frontiers if f.room_id == action.room_id]
            d = min(ds, default=math.inf)
        elif action.position is not None:
            region = cells_within(self.trav.shape, action.position, INTERACTION_RADIUS_M / self.resolution) & self.trav
            d = region_distance(self.dist, region)
        else:
            d = 0.0
        return d * self.resolution

    def euclidean(self, action: HighLevelAction) -> float:
        if action.verb == "explore":
            pts = [f.centroid for f in self.frontiers if f.room_id == action.room_id]
        elif action.position is not None:
            pts = [action.position]
        else:
            return 0.0
        r, c = self.agent_cell
        return min(math.hypot(p[0] - r, p[1] - c) for p in pts) * self.resolution if pts else math.inf


@dataclass
class PolicyDecision:
    action: Decision
    raw: Optional[str] = None
    rationale: Optional[str] = None
    prompt: Optional[str] = None

    @property
    def prompt_hash(self) -> Optional[str]:
        return hashlib.sha256(self.prompt.encode()).hexdigest()[:16] if self.prompt else None


class Policy:
    name = "base"
    auto_done = True  # ground-truth done once the target has been observed

    def reset(self, episode: Episode, seed: int) -> None:
        pass

    def decide(self, ctx: DecisionContext) -> PolicyDecision:
        raise NotImplementedError


def _exploratory(actions: Sequence[HighLevelAction]) -> List[HighLevelAction]:
    return [a for a in actions if a.exploratory]


class RandomPolicy(Policy):
    """Uniform choice among frontiers and closed objects."""

    name = "random"

    def __init__(self) -> None:
        self.rng = np.random.default_rng(0)

    def reset(self, episode: Episode, seed: int) -> None:
        self.rng = np.random.default_rng([seed, 104729])

    def decide(self, ctx: DecisionContext) -> PolicyDecision:
        options = _exploratory(ctx.actions)
        if not options:
            return PolicyDecision(HighLevelAction("done"), rationale="nothing left to explore or open")
        return PolicyDecision(options[int(self.rng.integers(len(options)))])


class GreedyPolicy(Policy):
    """Closest frontier or closed object by known-map path length."""

    name = "greedy"

    def decide(self, ctx: DecisionContext) -> PolicyDecision:
        options = _exploratory(ctx.actions)
        if not options:
            return PolicyDecision(HighLevelAction("done"), rationale="nothing left to explore or open")
        dists = [ctx.action_distance(a) for a in options]
        if not any(math.isfinite(d) for d in dists):
            dists = [ctx.euclidean(a) for a in options]
        best = int(np.argmin(dists))  # first minimum keeps enumeration order on ties
        return PolicyDecision(options[best], rationale=f"distance {dists[best]:.2f} m")


def load_similarity(path: Optional[Path] = None) -> "SimilarityTable":
    if path is None:
        text = resources.files("scenesearch.data").joinpath("similarity.json").read_text()
    else:
        text = Path(path).read_text()
    data = json.loads(text)
    return SimilarityTable({(a, b): float(s) for a, b, s in data["pairs"]}, float(data.get("default", 0.0)))


@dataclass
class SimilarityTable:
    pairs: Dict[Tuple[str, str], float] = field(default_factory=dict)
    default: float = 0.0

    def __call__(self, a: str, b: str) -> float:
        if a == b:
            return 1.0
        return self.pairs.get((a, b), self.pairs.get((b, a), self.default))


class CooccurrencePolicy(Policy):
    """Semantic score of the action's context over (1 + path length)."""

    name = "cooccurrence"

    def __init__(self, similarity: Optional[SimilarityTable] = None) -> None:
        self.sim = similarity or load_similarity()

    def context_score(self, ctx: DecisionContext, action: HighLevelAction) -> float:
        if action.verb == "explore":
            label = ctx.sg.rooms[action.room_id].label
            base = label.rsplit(" ", 1)[0] if label.rsplit(" ", 1)[-1].isdigit() else label
            scores = [self.sim(ctx.target, base)]
            scores += [self.sim(ctx.target, o.category) for o in ctx.sg.objects_in(action.room_id)
                       if o.category != "door"]
            return max(scores)
        return self.sim(ctx.target, action.obj)

    def decide(self, ctx: DecisionContext) -> PolicyDecision:
        options = _exploratory(ctx.actions)
        if not options:
            return PolicyDecision(HighLevelAction("done"), rationale="nothing left to explore or open")
        scores = []
        for a in options:
            d = ctx.action_distance(a)
            scores.append(self.context_score(ctx, a) / (1.0 + d) if math.isfinite(d) else 0.0)
        best = int(np.argmax(scores))
        return PolicyDecision(options[best], rationale=f"score {scores[best]:.4f}")


class OraclePolicy(Policy):
    """Ground-truth planner: the door or container blocking the nearest target, then the target."""

    name = "oracle"

    def reset(self, episode: Episode, seed: int) -> None:
        self.episode = episode
        self.trav = gt_traversable(episode.world, doors_open=True)

    def _root_chain(self, obj: ObjectSpec) -> List[ObjectSpec]:
        spec = self.episode.world
        chain = []
        cur = obj
        while cur.inside_of is not None or cur.on_top_of is not None:
            cur = spec.object_by_id(cur.inside_of if cur.inside_of is not None else cur.on_top_of)
            chain.append(cur)
        return chain

    APPROACH_TRIES = 8

    def _approach_path(self, state, obj: ObjectSpec, start, anchor, radius) -> Optional[List[Tuple[int, int]]]:
        """Shortest path to a cell from which the sensor would actually pick the object up."""
        goal = approach_region(self.episode.world, obj, self.trav)
        path = None
        for _ in range(self.APPROACH_TRIES):
            path = astar(self.trav, start, goal, anchor, radius)
            if path is None or sees_from(state, path[-1], obj):
                return path
            goal[path[-1]] = False
        return path

    def decide(self, ctx: DecisionContext) -> PolicyDecision:
        state = ctx.world
        spec = self.episode.world
        radius = INTERACTION_RADIUS_M / spec.resolution
        best = None
        for obj in spec.objects:
            if obj.category != ctx.target:
                continue
            chain = self._root_chain(obj)
            anchor = chain[-1].position if chain else obj.position
            path = self._approach_path(state, obj, ctx.agent_cell, anchor, radius)
            if path is not None and (best is None or len(path) < len(best[1])):
                best = (obj, path, chain)
        if best is None:
            return PolicyDecision(HighLevelAction("done"), rationale="no reachable target")
        obj, path, chain = best
        door_at = {}
        for d in spec.doors:
            for cell in d.blocked_cells:
                door_at[cell] = d
        # the ground-truth path supplies the approach waypoint, so the agent
        # never settles for a spot on the wrong side of a wall
        for k, cell in enumerate(path):
            d = door_at.get(cell)
            if d is not None and state.door_states[d.id] == CLOSED:
                approach = path[max(0, k - self.DOOR_BACKOFF)]
                return PolicyDecision(self._action(ctx, "go_to_and_open", d.id, "door", d.center, approach),
                                      rationale="closed door on the shortest path")
        containers = set()
        cur = obj
        while cur.inside_of is not None or cur.on_top_of is not None:
            if cur.inside_of is not None:
                containers.add(cur.inside_of)
            cur = spec.object_by_id(cur.inside_of if cur.inside_of is not None else cur.on_top_of)
        for parent in reversed(chain):
            if parent.id in containers and parent.openable and state.object_states[parent.id] == CLOSED:
                return PolicyDecision(self._action(ctx, "go_to_and_open", parent.id, parent.category, parent.position,
                                                   path[-1]), rationale="target stored in a closed container")
        pos = chain[-1].position if chain else obj.position
        return PolicyDecision(self._action(ctx, "navigate", obj.id, obj.category, pos, path[-1]),
                              rationale="target reachable")

    DOOR_BACKOFF = 8

    def _action(self, ctx: DecisionContext, verb: str, oid: int, category: str,
                pos: Tuple[float, float], approach: Tuple[int, int]) -> HighLevelAction:
        known = ctx.sg.object(oid)
        rid = known.room if known is not None else ctx.sg.room_of_point(pos)
        label = ctx.sg.rooms[rid].label if rid is not None else "unknown room"
        return HighLevelAction(verb, label, category, rid, oid, (float(pos[0]), float(pos[1])), approach=tuple(approach))


class ChatPolicy(Policy):
    """Structured prompt to a chat endpoint; invalid replies continue the same conversation."""

    name = "chat"
    auto_done = False

    def __init__(self, client: ChatClient, history_length: int = HISTORY_LENGTH) -> None:
        self.client = client
        self.history_length = history_length
        self.messages: List[Dict[str, str]] = []

    def reset(self, episode: Episode, seed: int) -> None:
        self.messages = []

    def decide(self, ctx: DecisionContext) -> PolicyDecision:
        if ctx.retry_call is not None and self.messages:
            content = retry_message(ctx.retry_call)
            self.messages.append({"role": "user", "content": content})
        else:
            history = realign_history(ctx.history, ctx.sg, self.history_length)
            content = build_prompt(ctx.sg, ctx.frontiers, history, ctx.target,
                                   ctx.room_distances, ctx.frontier_distances).render()
            self.messages = [{"role": "user", "content": content}]
        try:
            reply = self.client.complete(self.messages)
        except ChatError as exc:
            raise PolicyError(str(exc)) from exc
        self.messages.append({"role": "assistant", "content": reply})
        action = parse_reply(reply, ctx.sg, ctx.agent_cell)
        return PolicyDecision(action, raw=reply, prompt=content)


POLICIES = ("random", "greedy", "cooccurrence", "chat", "oracle")


def make_policy(name: str, client: Optional[ChatClient] = None, similarity_path: Optional[Path] = None) -> Policy:
    if name == "random":
        return RandomPolicy()
    if name == "greedy":
        return GreedyPolicy()
    if name == "cooccurrence":
        return CooccurrencePolicy(load_similarity(similarity_path) if similarity_path else None)
    if name == "oracle":
        return OraclePolicy()
    if name == "chat":
        if client is None:
            raise ValueError("chat policy needs a chat client")
        return ChatPolicy(client)
    raise ValueError(f"unknown policy {name!r}; expected one of {', '.join(POLICIES)}")
