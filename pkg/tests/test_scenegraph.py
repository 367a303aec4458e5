from __future__ import annotations

import math

import numpy as np
import pytest

from oracles import exhaustive_assignment
from scenes import fixture_scene_graph, random_assignment_fixture, through_wall_graph, two_room_map
from scenesearch.mapping import Frontier, ViewpointIndex, ground_truth_map
from scenesearch.scenegraph import (
    GENERIC,
    LAMBDA,
    UNEXPLORED,
    DoorDensity,
    RuleClassifier,
    assign_object,
    build_scene_graph,
    classify_rooms,
    dedupe_labels,
    match_frontiers,
    room_adjacency,
    separate_rooms,
)
from scenesearch.voronoi import voronoi_graph
from scenesearch.world import LayoutConfig, generate_layout
from scenesearch.world.model import Pose


def test_density_peak_and_decay():
    dens = DoorDensity(np.array([[0.0, 0.0]]), bandwidth=2.0)
    assert math.isclose(dens(np.array([[0.0, 0.0]]))[0], dens.peak)
    far = dens(np.array([[0.0, 10.0]]))[0]
    assert far < 1e-8 * dens.peak


def test_density_without_doors_cuts_nothing():
    dens = DoorDensity(np.zeros((0, 2)))
    assert not dens.cuts(np.array([[0.0, 0.0], [0.0, 5.0]]))
    assert dens(np.array([[1.0, 1.0]])).tolist() == [0.0]


def test_density_cut_is_independent_of_door_count():
    line = np.array([[0.0, -1.0], [0.0, 1.0]])
    one = DoorDensity(np.array([[0.0, 0.0]]))
    many = DoorDensity(np.array([[0.0, 0.0], [50.0, 50.0], [-50.0, 80.0]]))
    assert one.cuts(line) and many.cuts(line)


def test_two_rooms_separate_at_the_doorway():
    bev, door = two_room_map()
    g, _ = voronoi_graph(bev, None, [door])
    part = separate_rooms(g, DoorDensity(np.array([door])))
    assert len(part.rooms) == 2
    sides = [{g.cell(n)[1] < 25.5 for n in room} for room in part.rooms]
    assert all(len(s) == 1 for s in sides)
    assert room_adjacency(g, part) == {(0, 1)}


def test_single_room_has_no_adjacency():
    bev, _ = two_room_map()
    g, _ = voronoi_graph(bev)
    part = separate_rooms(g, DoorDensity(np.zeros((0, 2))))
    assert len(part.rooms) == 1 and not part.cut_edges
    assert room_adjacency(g, part) == set()


@pytest.mark.parametrize("seed", [4, 7])
def test_adjacency_matches_doors(seed):
    spec = generate_layout(seed, LayoutConfig(rooms=(4, 4), corridor="always"))
    bev = ground_truth_map(spec)
    centres = [d.center for d in spec.doors]
    g, _ = voronoi_graph(bev, spec.agent_start.cell, centres)
    part = separate_rooms(g, DoorDensity(np.array(centres)))
    gt_of = [int(np.bincount([spec.room_grid[g.cell(n)] for n in room if spec.room_grid[g.cell(n)] >= 0]).argmax())
             for room in part.rooms]
    assert sorted(gt_of) == sorted(r.id for r in spec.rooms)
    found = {tuple(sorted((gt_of[a], gt_of[b]))) for a, b in room_adjacency(g, part)}
    assert found == {tuple(sorted(d.rooms)) for d in spec.doors}


@pytest.mark.parametrize("seed", range(40))
def test_assignment_matches_exhaustive_minimum(seed):
    g, part, position, viewpoints = random_assignment_fixture(seed)
    best, argbest = exhaustive_assignment(g.graph, part.label_of(), position, viewpoints, g.resolution, LAMBDA)
    a = assign_object(g, part, position, viewpoints)
    assert math.isclose(a.cost, best, rel_tol=1e-12, abs_tol=1e-12)
    assert a.node in argbest
    assert a.room == part.label_of()[a.node]


def test_lambda_keeps_objects_out_of_the_room_behind_the_wall():
    g, part, position, viewpoints = through_wall_graph()
    assert assign_object(g, part, position, viewpoints, lam=1.0).room == 1
    assert assign_object(g, part, position, viewpoints, lam=LAMBDA).room == 0


def test_assignment_without_viewpoints_is_low_confidence():
    g, part, position, _ = through_wall_graph()
    a = assign_object(g, part, position, [])
    assert a.low_confidence and a.node == 0 and math.isinf(a.cost)


def test_rule_classifier():
    rules = RuleClassifier()
    assert rules.label(["fridge", "oven", "sink"]) == "kitchen"
    assert rules.label(["bed", "wardrobe"]) == "bedroom"
    assert rules.label([]) == UNEXPLORED
    assert rules.label(["bed", "fridge"]) == GENERIC
    assert rules.label(["mystery"]) == GENERIC


def test_external_classifier_failure_falls_back():
    events = []

    def broken(rooms):
        raise TimeoutError("no answer")

    assert classify_rooms([["bed"]], broken, events) == ["bedroom"]
    assert events and events[0].kind == "classifier_fallback"
    assert classify_rooms([["bed"], []], lambda rooms: ["Master Bedroom", "x"]) == ["master bedroom", UNEXPLORED]
    assert classify_rooms([["bed"]], lambda rooms: ["a", "b"], events) == ["bedroom"]


def test_dedupe_labels():
    assert dedupe_labels(["kitchen", "room", "room", "bedroom"]) == ["kitchen", "room 1", "room 2", "bedroom"]


def test_match_frontiers_uses_nearest_node():
    sg = fixture_scene_graph()
    fronts = [Frontier(0, [(6, 6)], (6, 6), "outward"), Frontier(1, [(19, 44)], (19, 44), "interior")]
    match_frontiers(fronts, sg)
    assert [f.room_id for f in fronts] == [0, 2]


def test_build_scene_graph_on_ground_truth_map():
    spec = generate_layout(2, LayoutConfig(rooms=(3, 3), corridor="never"))
    bev = ground_truth_map(spec)
    vpi = ViewpointIndex()
    for inst in bev.instances.values():
        vpi.add(inst.id, Pose(int(inst.position[0]), int(inst.position[1]), 0.0))
    g, _ = voronoi_graph(bev, spec.agent_start.cell, [d.center for d in spec.doors])
    sg = build_scene_graph(bev, vpi, g)
    assert len(sg.rooms) == len(spec.rooms)
    for obj in sg.objects:
        if obj.category == "door":
            assert len(obj.rooms) == 2
            continue
        gt = spec.room_grid[tuple(int(round(x)) for x in obj.position)]
        members = [spec.room_grid[g.cell(n)] for n in sg.rooms[obj.room].voronoi_nodes]
        assert gt == max(set(members), key=members.count)
    doc = sg.to_json()
    assert doc["schema"] == "scenegraph.v1"
    assert len(doc["rooms"]) == len(sg.rooms)
