"""High-level action space and parsing of planner replies."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

from ..mapping import Frontier
from ..scenegraph import ObjectNode, SceneGraph

VERBS = ("navigate", "go_to_and_open", "close", "explore", "done")
ARITY = {"navigate": 2, "go_to_and_open": 2, "close": 2, "explore": 1, "done": 0}
_CALL = re.compile(r"([A-Za-z_]+)\s*\(([^()]*)\)")
_PREFIX = re.compile(r"^(?:\d+\s*x\s+)?(?:(?:opened|open|closed)\s+)?")


@dataclass(frozen=True)
class HighLevelAction:
    verb: str
    room: Optional[str] = None
    obj: Optional[str] = None
    room_id: Optional[int] = None
    object_id: Optional[int] = None
    position: Optional[Tuple[float, float]] = None
    node_cell: Optional[Tuple[int, int]] = None
    approach: Optional[Tuple[int, int]] = None  # exact standing cell, when the planner knows one

    def call(self) -> str:
        args = [a for a in (self.room, self.obj) if a is not None]
        return f"{self.verb}({', '.join(args)})"

    @property
    def exploratory(self) -> bool:
        return self.verb in ("explore", "go_to_and_open")


@dataclass(frozen=True)
class InvalidAction:
    call_text: str
    reason: str

    verb = "invalid"

    def call(self) -> str:
        return self.call_text


Decision = Union[HighLevelAction, InvalidAction]


def normalize(text: str) -> str:
    text = text.strip().strip("\"'`").lower().replace("_", " ")
    return re.sub(r"\s+", " ", text).strip()


def edit_distance(a: str, b: str) -> int:
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def fuzzy_match(query: str, names: Sequence[str], max_edits: int = 2) -> Optional[str]:
    """Exact, then prefix, then nearest by edit distance (at most ``max_edits``).

    ``names`` are tried in the given order, so earlier names win ties.
    """
    if query in names:
        return query
    for name in names:
        if name.startswith(query) or query.startswith(name):
            return name
    best, best_d = None, max_edits + 1
    for name in names:
        d = edit_distance(query, name)
        if d < best_d:
            best, best_d = name, d
    return best


def _object_action(verb: str, sg: SceneGraph, obj: ObjectNode, room_id: Optional[int] = None) -> HighLevelAction:
    rid = obj.room if room_id is None else room_id
    node_cell = sg.graph.cell(obj.node) if sg.graph is not None and obj.node in sg.graph.graph else None
    return HighLevelAction(verb, sg.rooms[rid].label, obj.category, rid, obj.id,
                           (float(obj.position[0]), float(obj.position[1])), node_cell)


def available_actions(sg: SceneGraph, frontiers: Sequence[Frontier]) -> List[HighLevelAction]:
    """Every action that could currently be issued, in a fixed order."""
    out: List[HighLevelAction] = []
    rooms = sorted({f.room_id for f in frontiers if f.room_id is not None})
    for rid in rooms:
        out.append(HighLevelAction("explore", sg.rooms[rid].label, room_id=rid))
    objs = sorted(sg.objects, key=lambda o: o.id)
    for o in objs:
        if o.state == "closed":
            out.append(_object_action("go_to_and_open", sg, o))
    for o in objs:
        if o.state == "open":
            out.append(_object_action("close", sg, o))
    for o in objs:
        out.append(_object_action("navigate", sg, o))
    out.append(HighLevelAction("done"))
    return out


def _strip_object(name: str) -> str:
    return _PREFIX.sub("", name).strip()


def parse_reply(text: str, sg: SceneGraph, agent_cell: Optional[Tuple[float, float]] = None) -> Decision:
    """Resolve the last function call in ``text`` against the scene graph."""
    calls = [(normalize(v).replace(" ", "_"), args) for v, args in _CALL.findall(text or "")]
    calls = [(v, a) for v, a in calls if v in VERBS]
    if not calls:
        snippet = (text or "").strip().splitlines()[-1:] or [""]
        return InvalidAction(snippet[0][:80], "no command found")
    verb, raw = calls[-1]
    args = [normalize(a) for a in raw.split(",") if a.strip()]
    call_text = f"{verb}({', '.join(a.strip() for a in raw.split(',') if a.strip())})"
    if verb == "done":
        return HighLevelAction("done")
    if len(args) < ARITY[verb]:
        return InvalidAction(call_text, "missing argument")
    labels = [r.label for r in sg.rooms]
    label = fuzzy_match(args[0], labels)
    if label is None:
        return InvalidAction(call_text, "unknown room")
    rid = labels.index(label)
    if verb == "explore":
        return HighLevelAction("explore", label, room_id=rid)
    query = _strip_object(args[1])
    in_room = [o for o in sg.objects_in(rid)]
    cats = sorted({o.category for o in in_room})
    cat = fuzzy_match(query, cats)
    if cat is None:
        return InvalidAction(call_text, "unknown object")
    instances = [o for o in in_room if o.category == cat]
    wanted = {"go_to_and_open": "closed", "close": "open"}.get(verb)
    compatible = [o for o in instances if wanted is None or o.state == wanted]
    pool = compatible or instances
    ref = agent_cell
    if ref is not None:
        pool = sorted(pool, key=lambda o: (math.hypot(o.position[0] - ref[0], o.position[1] - ref[1]), o.id))
    else:
        pool = sorted(pool, key=lambda o: o.id)
    return _object_action(verb, sg, pool[0], rid)
