"""The reviewed prompt fixture: scene graph, frontiers, history and distances."""
from __future__ import annotations

from scenes import fixture_scene_graph
from scenesearch.mapping import Frontier
from scenesearch.textenc import ActionRecord, StructuredPrompt, build_prompt, realign_history


def fixture_prompt() -> StructuredPrompt:
    sg = fixture_scene_graph()
    frontiers = [
        Frontier(0, [(6, 6)], (6, 6), "outward", 0),
        Frontier(1, [(19, 44)], (19, 44), "interior", 2),
        Frontier(2, [(4, 40)], (4, 40), "outward", 1),
    ]
    records = [
        ActionRecord("explore", ("room",), (19, 44), None, "success"),
        ActionRecord("go_to_and_open", ("kitchen", "fridge"), (3, 6), "fridge", "failure"),
    ]
    history = realign_history(records, sg)
    return build_prompt(sg, frontiers, history, "cup", {0: 1.2, 1: 7.5, 2: 25.0}, {0: 2.0, 2: 10.0})
