"""Scene graph to structured text for the high-level planner."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .mapping import Frontier
from .scenegraph import ObjectNode, SceneGraph

TEXT_VERSION = "text.v1"

# distance bins: (upper bound inclusive, adjective)
DISTANCE_BINS = ((3.0, "very close"), (10.0, "near"), (20.0, "far"))
FAR_ADJECTIVE = "distant"

STATE_PREFIX = {"open": "opened", "closed": "closed"}
UNEXPLORED_AREA = "unexplored area"
NONE_LITERAL = "none"
UNKNOWN_ROOM = "unknown room"
RETRY_TEMPLATE = "The last action {call} failed. Please try another command."

PREAMBLE = (
    "You are a robot in an unexplored house. You can move between rooms, open and close objects, "
    "and explore unknown areas. Plan one command at a time to find the goal object as quickly as possible."
)
ROOMS_HEADER = "Rooms and the objects in them (distance from you in brackets):"
FRONTIER_HEADER = "Unexplored areas leading out of the known rooms:"
HISTORY_HEADER = "Previous actions:"
COMMANDS_HEADER = "Commands:"
COMMANDS = (
    "navigate(room_name, object_name): move next to an object in a room.",
    "go_to_and_open(room_name, object_name): move to a closed object or door and open it.",
    "close(room_name, object_name): move to an open object or door and close it.",
    "explore(room_name): move to an unexplored area of a room.",
    "done(): call when the goal object has been found.",
)
NOTES_HEADER = "Remember:"
NOTES = (
    "Objects can be hidden inside closed containers. Opening is slower than moving.",
    "Only use rooms and objects that are listed above.",
    "Finish your answer with exactly one command on its own line.",
)

VERBS = ("navigate", "go_to_and_open", "close", "explore", "done")
UNPARSED = "unparsed"  # reply text that held no command
OUTCOMES = ("success", "failure", "invalid argument")


def bin_distance(d: float) -> str:
    if d < 0 or math.isnan(d):
        raise ValueError(f"distance must be non-negative, got {d}")
    for bound, word in DISTANCE_BINS:
        if d <= bound:
            return word
    return FAR_ADJECTIVE


def object_name(obj: ObjectNode) -> str:
    prefix = STATE_PREFIX.get(obj.state)
    return f"{prefix} {obj.category}" if prefix else obj.category


def _redundant_door(obj: ObjectNode, sg: SceneGraph) -> bool:
    """Open door between two explored rooms that are already known to connect."""
    if obj.category != "door" or obj.state != "open" or len(obj.rooms) != 2:
        return False
    a, b = sorted(obj.rooms)
    explored = all(not sg.rooms[r].label.startswith("unexplored") for r in (a, b))
    return explored and (a, b) in sg.adjacency


def room_items(sg: SceneGraph, rid: int) -> List[str]:
    """Collapsed, sorted object list for one room."""
    counts: Dict[str, int] = {}
    for obj in sg.objects_in(rid):
        if _redundant_door(obj, sg):
            continue
        name = object_name(obj)
        counts[name] = counts.get(name, 0) + 1
    return [name if n == 1 else f"{n}x {name}" for name, n in sorted(counts.items())]


def _room_order(sg: SceneGraph, distances: Mapping[int, float]) -> List[int]:
    return sorted((r.id for r in sg.rooms), key=lambda rid: (distances.get(rid, math.inf), sg.rooms[rid].label))


def _adjective(d: Optional[float]) -> str:
    return "unreachable" if d is None or not math.isfinite(d) else bin_distance(d)


def encode_scene(sg: SceneGraph, distances: Mapping[int, float],
                 frontiers: Sequence[Frontier] = ()) -> List[str]:
    """One line per room: ``<label> (<adjective>): item, item, ...``."""
    interior = {f.room_id for f in frontiers if f.kind == "interior" and f.room_id is not None}
    lines = []
    for rid in _room_order(sg, distances):
        items = room_items(sg, rid)
        if rid in interior:
            items.append(UNEXPLORED_AREA)
        body = ", ".join(items) if items else NONE_LITERAL
        lines.append(f"- {sg.rooms[rid].label} ({_adjective(distances.get(rid))}): {body}")
    return lines


def encode_frontiers(frontiers: Sequence[Frontier], sg: SceneGraph,
                     distances: Mapping[int, float]) -> List[str]:
    """Outward frontiers, one line per room that has any; ``none`` when empty."""
    by_room: Dict[Optional[int], float] = {}
    for f in frontiers:
        if f.kind != "outward":
            continue
        d = distances.get(f.id, math.inf)
        by_room[f.room_id] = min(by_room.get(f.room_id, math.inf), d)
    if not by_room:
        return [NONE_LITERAL]
    lines = []
    keyed = [(sg.rooms[r].label if r is not None else UNKNOWN_ROOM, d) for r, d in by_room.items()]
    for label, d in sorted(keyed, key=lambda x: (x[1], x[0])):
        lines.append(f"- {UNEXPLORED_AREA} leading out of {label} ({_adjective(d)})")
    return lines


@dataclass
class ActionRecord:
    verb: str
    args: Tuple[str, ...] = ()
    anchor: Optional[Tuple[int, int]] = None
    category: Optional[str] = None
    outcome: Optional[str] = None

    def __post_init__(self) -> None:
        if self.verb not in VERBS and self.verb != UNPARSED:
            raise ValueError(f"unknown verb {self.verb!r}")

    def set_outcome(self, outcome: str) -> None:
        if self.outcome is not None:
            raise ValueError("outcome already set")
        if outcome not in OUTCOMES:
            raise ValueError(f"unknown outcome {outcome!r}")
        self.outcome = outcome

    def call(self) -> str:
        if self.verb == UNPARSED:
            return self.args[0] if self.args else ""
        return f"{self.verb}({', '.join(self.args)})"

    def to_json(self) -> Dict:
        return {"verb": self.verb, "args": list(self.args),
                "anchor": list(self.anchor) if self.anchor else None,
                "category": self.category, "outcome": self.outcome}


def realign_history(records: Sequence[ActionRecord], sg: SceneGraph, h: int = 8) -> List[str]:
    """Render the last ``h`` records with room names taken from the current graph."""
    if h <= 0:
        return []
    lines = []
    for rec in list(records)[-h:]:
        if rec.verb == "done":
            call = "done()"
        elif rec.anchor is None:
            call = rec.call()
        else:
            rid = sg.room_of_point(rec.anchor)
            label = sg.rooms[rid].label if rid is not None else UNKNOWN_ROOM
            args = [label] + ([rec.category] if rec.category else [])
            call = f"{rec.verb}({', '.join(args)})"
        lines.append(f"{call} -> {rec.outcome}")
    return lines


@dataclass
class StructuredPrompt:
    preamble: str
    goal: str
    rooms: List[str] = field(default_factory=list)
    frontiers: List[str] = field(default_factory=list)
    history: List[str] = field(default_factory=list)
    include_scene: bool = True

    def render(self) -> str:
        parts = [self.preamble, "", f"Goal: find a {self.goal}."]
        if self.include_scene:
            parts += ["", ROOMS_HEADER] + self.rooms
            parts += ["", FRONTIER_HEADER] + self.frontiers
            parts += ["", HISTORY_HEADER] + ([f"- {x}" for x in self.history] or [NONE_LITERAL])
        parts += ["", COMMANDS_HEADER] + [f"- {c}" for c in COMMANDS]
        parts += ["", NOTES_HEADER] + [f"- {n}" for n in NOTES]
        return "\n".join(parts) + "\n"


def build_prompt(sg: SceneGraph, frontiers: Sequence[Frontier], history: Sequence[str], goal: str,
                 room_distances: Mapping[int, float], frontier_distances: Mapping[int, float]) -> StructuredPrompt:
    if not sg.rooms:
        return StructuredPrompt(PREAMBLE, goal, include_scene=False)
    return StructuredPrompt(
        PREAMBLE,
        goal,
        encode_scene(sg, room_distances, frontiers),
        encode_frontiers(frontiers, sg, frontier_distances),
        list(history),
    )


def retry_message(call: str) -> str:
    return RETRY_TEMPLATE.format(call=call)


CLASSIFY_PREAMBLE = (
    "Below are clusters of objects observed in the rooms of a house. "
    "Give the most likely room type for each cluster, one per line as '<index>: <room type>'."
)


def classification_prompt(rooms: Sequence[Sequence[str]]) -> str:
    lines = [CLASSIFY_PREAMBLE, ""]
    for i, cats in enumerate(rooms):
        lines.append(f"{i}: {', '.join(sorted(cats)) if cats else NONE_LITERAL}")
    return "\n".join(lines) + "\n"
