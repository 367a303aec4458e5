from __future__ import annotations

import math
from pathlib import Path

import networkx as nx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from prompt_fixture import fixture_prompt
from scenes import fixture_scene_graph
from scenesearch.agent.actions import HighLevelAction, parse_reply
from scenesearch.mapping import Frontier
from scenesearch.scenegraph import ObjectNode, Partition, RoomNode, SceneGraph
from scenesearch.textenc import (
    ROOMS_HEADER,
    ActionRecord,
    bin_distance,
    build_prompt,
    classification_prompt,
    encode_frontiers,
    encode_scene,
    realign_history,
    retry_message,
    room_items,
)
from scenesearch.voronoi import VoronoiGraph

GOLDEN = Path(__file__).parent / "golden" / "prompt_fixture.txt"


@pytest.mark.parametrize("d, word", [
    (0.0, "very close"), (2.0, "very close"), (3.0, "very close"), (3.0001, "near"), (10.0, "near"),
    (10.5, "far"), (20.0, "far"), (math.nextafter(20.0, math.inf), "distant"), (25.0, "distant"),
])
def test_bin_distance(d, word):
    assert bin_distance(d) == word


def test_bin_distance_rejects_negative():
    with pytest.raises(ValueError):
        bin_distance(-0.1)


@given(st.floats(0, 1e6), st.floats(0, 1e6))
def test_bins_are_monotone(a, b):
    order = ["very close", "near", "far", "distant"]
    lo, hi = sorted((a, b))
    assert order.index(bin_distance(lo)) <= order.index(bin_distance(hi))


def test_room_items_collapse_and_filter():
    sg = fixture_scene_graph()
    assert room_items(sg, 0) == ["2x chair", "closed fridge", "opened cabinet"]
    # the closed door between bedroom and the unexplored room stays listed
    assert "closed door" in room_items(sg, 1)


def test_open_door_kept_when_rooms_not_known_connected():
    sg = fixture_scene_graph()
    sg.adjacency = set()
    assert "opened door" in room_items(sg, 0)


def test_encode_scene_orders_by_distance_then_label():
    sg = fixture_scene_graph()
    lines = encode_scene(sg, {0: 5.0, 1: 5.0, 2: math.inf})
    assert [l.split(" (")[0] for l in lines] == ["- bedroom", "- kitchen", "- room"]
    assert lines[-1].startswith("- room (unreachable)")


def test_encode_frontiers_empty_is_none():
    sg = fixture_scene_graph()
    assert encode_frontiers([], sg, {}) == ["none"]
    interior = [Frontier(0, [(1, 1)], (1, 1), "interior", 0)]
    assert encode_frontiers(interior, sg, {0: 1.0}) == ["none"]


def test_empty_scene_prompt_only_has_goal_and_commands():
    text = build_prompt(SceneGraph(), [], [], "mug", {}, {}).render()
    assert "Goal: find a mug." in text
    assert ROOMS_HEADER not in text


def test_golden_prompt_is_byte_identical():
    assert fixture_prompt().render() == GOLDEN.read_text()


def test_every_listed_entity_parses_back():
    sg = fixture_scene_graph()
    for line in fixture_prompt().rooms:
        label, items = line[2:].split(" (", 1)[0], line.split(": ", 1)[1].split(", ")
        room = sg.room_by_label(label)
        assert parse_reply(f"explore({label})", sg).room_id == room.id
        for item in items:
            if item in ("unexplored area", "none"):
                continue
            action = parse_reply(f"navigate({label}, {item})", sg)
            assert isinstance(action, HighLevelAction), item
            assert action.room_id == room.id
            assert item.endswith(action.obj)


def test_retry_message_is_exact():
    assert retry_message("explore(attic)") == "The last action explore(attic) failed. Please try another command."


def _relabel_graph(label: str) -> SceneGraph:
    g = nx.Graph()
    g.add_node(0, cell=(0, 0), clearance=0.3)
    g.add_node(1, cell=(0, 40), clearance=0.3)
    g.add_edge(0, 1, length=3.0, path=[(0, 0), (0, 40)])
    vg = VoronoiGraph(g, 0.075)
    part = Partition([[0], [1]], [(0, 1)], set())
    return SceneGraph([RoomNode(0, label, [0], 0), RoomNode(1, "bedroom", [1], 1)], [], set(), vg, part)


def test_history_follows_room_relabeling():
    rec = ActionRecord("explore", ("unexplored room",), (1, 2), None, "success")
    before = realign_history([rec], _relabel_graph("unexplored room"))
    after = realign_history([rec], _relabel_graph("kitchen"))
    assert before == ["explore(unexplored room) -> success"]
    assert after == ["explore(kitchen) -> success"]


def test_history_window_and_unanchored_calls():
    sg = _relabel_graph("kitchen")
    recs = [ActionRecord("explore", ("kitchen",), (0, 0), None, "success") for _ in range(10)]
    recs.append(ActionRecord("unparsed", ("hmm",), None, None, "invalid argument"))
    lines = realign_history(recs, sg, h=3)
    assert lines == ["explore(kitchen) -> success"] * 2 + ["hmm -> invalid argument"]
    assert realign_history(recs, sg, h=0) == []


def test_action_record_outcome_rules():
    rec = ActionRecord("navigate", ("kitchen", "fridge"))
    rec.set_outcome("success")
    with pytest.raises(ValueError):
        rec.set_outcome("failure")
    with pytest.raises(ValueError):
        ActionRecord("fly")
    assert rec.to_json()["outcome"] == "success"


def test_classification_prompt_lists_clusters():
    text = classification_prompt([["oven", "fridge"], []])
    assert "0: fridge, oven" in text and "1: none" in text


def test_object_node_names_reflect_state():
    sg = SceneGraph([RoomNode(0, "kitchen", [], 0)], [ObjectNode(1, "drawer", "open", 0, (0, 0), 0)])
    assert room_items(sg, 0) == ["opened drawer"]
