from __future__ import annotations

import json
import math

import numpy as np
import pytest
from scipy import ndimage

from scenesearch.grid import STRUCT8
from scenesearch.world import (
    CLOSED,
    INTERACTION_COST,
    OPEN,
    Action,
    Door,
    Episode,
    GtRoom,
    LayoutConfig,
    ObjectSpec,
    Pose,
    SchemaError,
    WorldSpec,
    default_priors,
    enrich_episode,
    full_rotation,
    generate_layout,
    gt_traversable,
    initial_state,
    sense,
    step,
)
from scenesearch.world.episode import target_reachable, target_visible_from_start
from scenesearch.world.sim import sees_from, snap_heading, visible_mask


def box_world(start=Pose(10, 5, 0.0)) -> WorldSpec:
    """Two 18x29 rooms split by a wall at column 30 with a closed door, a cabinet holding a cup."""
    h, w = 20, 61
    walls = np.zeros((h, w), bool)
    walls[[0, -1], :] = True
    walls[:, [0, -1]] = True
    walls[:, 30] = True
    room = np.full((h, w), -1, np.int32)
    room[1:-1, 1:30] = 0
    room[1:-1, 31:-1] = 1
    blocked = [(r, 30) for r in range(8, 12)]
    for r, c in blocked:
        walls[r, c] = False
    door = Door(0, (9.5, 30.0), blocked, CLOSED, (0, 1))
    cabinet = ObjectSpec(1, "cabinet", (10, 10), [(r, c) for r in (9, 10, 11) for c in (10, 11)], True, CLOSED,
                         contains=[2])
    cup = ObjectSpec(2, "cup", (10, 10), [], inside_of=1, volume_class="small")
    return WorldSpec(w, h, walls, room, [GtRoom(0, "kitchen"), GtRoom(1, "bedroom")], [door], [cabinet, cup], start)


@pytest.mark.parametrize("seed", range(8))
def test_layout_invariants_and_determinism(seed):
    cfg = LayoutConfig(rooms=(2, 8))
    spec = generate_layout(seed, cfg)
    assert spec.check_invariants() == []
    assert 2 <= len(spec.rooms) <= 8
    assert json.dumps(spec.to_json()) == json.dumps(generate_layout(seed, cfg).to_json())
    # with doors open every room is reachable from the start
    labels, _ = ndimage.label(gt_traversable(spec), structure=STRUCT8)
    reach = labels == labels[spec.agent_start.cell]
    assert set(np.unique(spec.room_grid[reach & (spec.room_grid >= 0)])) == {r.id for r in spec.rooms}


def test_layout_room_count_is_respected():
    for seed in range(3):
        assert len(generate_layout(seed, LayoutConfig(rooms=(5, 5))).rooms) == 5


def test_world_json_round_trip():
    spec = generate_layout(11)
    back = WorldSpec.from_json(json.loads(json.dumps(spec.to_json())))
    assert back.to_json() == spec.to_json()


def test_world_json_names_missing_field():
    doc = box_world().to_json()
    del doc["objects"][0]["footprint"]
    with pytest.raises(SchemaError, match="footprint"):
        WorldSpec.from_json(doc)
    with pytest.raises(SchemaError, match="schema"):
        WorldSpec.from_json({"schema": "world.v0"})


def test_episode_round_trip_and_feasibility(small_episode, tmp_path):
    path = tmp_path / "ep.json"
    small_episode.save(path)
    back = Episode.load(path)
    assert back.to_json() == small_episode.to_json()
    spec, target = small_episode.world, small_episode.target_category
    assert target_reachable(spec, target)
    assert not target_visible_from_start(spec, target)
    assert spec.check_invariants() == []


def test_enrichment_is_deterministic():
    layout = generate_layout(5, LayoutConfig(rooms=(3, 4)))
    a = enrich_episode(layout, default_priors(), 5)
    b = enrich_episode(layout, default_priors(), 5)
    assert a.to_json() == b.to_json()
    assert layout.to_json() == generate_layout(5, LayoutConfig(rooms=(3, 4))).to_json()  # input untouched


def test_snap_heading():
    assert snap_heading(0.0) == (0, 1)
    assert snap_heading(math.pi / 2) == (1, 0)
    assert snap_heading(-3 * math.pi / 4) == (-1, -1)


def test_forward_turn_and_costs():
    s = initial_state(box_world(Pose(5, 3, 0.0)))
    s, obs, cost = step(s, Action.forward())
    assert cost == 1 and obs.moved and s.pose.cell == (5, 4)
    assert math.isclose(obs.distance_m, 0.075)
    s, obs, cost = step(s, Action.turn_left(math.pi / 4))
    assert cost == 1 and not obs.moved
    s, obs, _ = step(s, Action.forward())
    assert s.pose.cell == (6, 5) and math.isclose(obs.distance_m, 0.075 * math.sqrt(2))


def test_forward_into_wall_is_blocked():
    s = initial_state(box_world(Pose(1, 1, math.pi)))
    s2, obs, cost = step(s, Action.forward())
    assert obs.failure == "blocked" and s2.pose == s.pose and cost == 1


def test_interaction_costs_thirty_and_checks_reach():
    far = initial_state(box_world(Pose(10, 35, 0.0)))
    _, obs, cost = step(far, Action.open(1))
    assert cost == INTERACTION_COST and obs.failure == "out of reach"
    near = initial_state(box_world(Pose(10, 6, 0.0)))
    s, obs, cost = step(near, Action.open(1))
    assert cost == INTERACTION_COST and obs.failure is None and s.state_of(1) == OPEN
    _, obs, _ = step(s, Action.open(1))
    assert obs.failure == "already open"
    _, obs, _ = step(near, Action.open(2))
    assert obs.failure == "not openable"


def test_nested_object_needs_open_container():
    s = initial_state(box_world(Pose(10, 6, 0.0)))
    assert 1 in sense(s).detections and 2 not in sense(s).detections
    s, obs, _ = step(s, Action.open(1))
    assert obs.detections[2].relation == "inside"


def test_door_toggles_occupancy_and_sight():
    s = initial_state(box_world(Pose(10, 28, 0.0)))
    assert s.occupied[9, 30]
    assert not sense(s).cells[:, 1].max() > 30
    s, obs, _ = step(s, Action.open(0))
    assert obs.failure is None and not s.occupied[9, 30]
    assert obs.cells[:, 1].max() > 30
    s, obs, _ = step(s, Action.close(0))
    assert s.state_of(0) == CLOSED and s.occupied[9, 30]


def test_done_freezes_the_state():
    s, _, cost = step(initial_state(box_world()), Action.done())
    assert s.done and cost == 0
    s2, obs, cost = step(s, Action.forward())
    assert s2 is s and cost == 0 and obs.failure


def test_visible_mask_field_of_view_and_range():
    occ = np.zeros((81, 81), bool)
    pose = Pose(40, 40, 0.0)
    vis = visible_mask(occ, pose, 0.1, range_m=3.0)
    assert vis[40, 70] and not vis[40, 71]  # 30 cells
    assert not vis[40, 20]  # behind
    # 60 degrees either side of the heading
    assert vis[40 + 14, 40 + 10] and not vis[40 + 20, 40 + 5]


def test_visible_mask_stops_at_first_obstacle():
    occ = np.zeros((21, 41), bool)
    occ[:, 20] = True
    vis = visible_mask(occ, Pose(10, 5, 0.0), 0.1)
    assert vis[10, 20] and not vis[10, 21:].any()


def test_full_rotation_covers_all_headings():
    s = initial_state(box_world(Pose(10, 5, 0.0)))
    s2, observations, cost = full_rotation(s)
    assert len(observations) == 4 and cost == 3
    seen = np.zeros_like(s.occupied)
    for obs in observations:
        seen[tuple(obs.cells.T)] = True
    assert seen[10, 1] and seen[1, 28] and seen[1, 5] and seen[18, 5]


def test_sees_from_matches_sensing():
    spec = box_world()
    s = initial_state(spec)
    cabinet = spec.object_by_id(1)
    assert sees_from(s, (10, 6), cabinet)
    # the closed door hides the cabinet from the other room
    assert not sees_from(s, (10, 35), cabinet)
    s_open = initial_state(box_world(Pose(10, 6, 0.0)))
    assert 1 in sense(s_open).detections
