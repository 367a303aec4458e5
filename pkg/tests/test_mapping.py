from __future__ import annotations

import numpy as np
import pytest

from oracles import flood_components, outside_unknown
from scenesearch.mapping import (
    FREE,
    MIN_FRONTIER_CELLS,
    OCCUPIED,
    UNKNOWN,
    BevMap,
    Instance,
    ViewpointIndex,
    detect_frontiers,
    enclosed_unknown,
    frontier_cells,
    ground_truth_map,
    integrate,
    unknown_count,
)
from scenesearch.world import Action, Observation, Pose, initial_state, sense, step


def random_partial_map(seed: int, n: int = 40) -> BevMap:
    rng = np.random.default_rng(seed)
    bev = BevMap.empty(n, n)
    bev.state[:] = rng.choice([UNKNOWN, FREE, OCCUPIED], size=(n, n), p=[0.3, 0.6, 0.1]).astype(np.int8)
    for _ in range(4):
        r, c = rng.integers(0, n - 8, 2)
        bev.state[r : r + 8, c : c + 8] = FREE
    return bev


def oracle_touch(bev: BevMap) -> np.ndarray:
    h, w = bev.shape
    out = np.zeros((h, w), bool)
    for r in range(h):
        for c in range(w):
            if bev.state[r, c] != FREE:
                continue
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < h and 0 <= cc < w and bev.state[rr, cc] == UNKNOWN:
                    out[r, c] = True
    return out


@pytest.mark.parametrize("seed", range(10))
def test_frontiers_match_flood_fill_oracle(seed):
    bev = random_partial_map(seed)
    mask = oracle_touch(bev)
    assert np.array_equal(frontier_cells(bev), mask)
    enclosed = bev.unknown & ~outside_unknown(bev.unknown)
    assert np.array_equal(enclosed_unknown(bev), enclosed)
    expected = []
    for comp in flood_components(mask):
        if len(comp) < MIN_FRONTIER_CELLS:
            continue
        outward = False
        for r, c in comp:
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < bev.shape[0] and 0 <= cc < bev.shape[1] and bev.unknown[rr, cc] and not enclosed[rr, cc]:
                    outward = True
        expected.append((comp, "outward" if outward else "interior"))
    got = [(f.cells, f.kind) for f in detect_frontiers(bev)]
    assert sorted(got) == sorted(expected)
    for f in detect_frontiers(bev):
        assert f.centroid in f.cells


def test_interior_pocket_is_interior():
    bev = BevMap.empty(12, 12)
    bev.state[:] = FREE
    bev.state[4:8, 4:8] = UNKNOWN
    bev.state[0, :] = UNKNOWN
    kinds = sorted(f.kind for f in detect_frontiers(bev))
    assert kinds == ["interior", "outward"]


def test_fully_known_map_has_no_frontiers():
    bev = BevMap.empty(5, 5)
    bev.state[:] = FREE
    assert detect_frontiers(bev) == []
    assert unknown_count(bev) == 0


def test_integrate_latest_observation_wins(small_episode):
    state = initial_state(small_episode.world)
    bev = BevMap.empty(state.spec.height, state.spec.width)
    vpi = ViewpointIndex()
    obs = sense(state)
    integrate(bev, vpi, obs)
    r, c = obs.cells[0]
    assert bev.state[r, c] == (OCCUPIED if obs.occupied[0] else FREE)
    for iid in obs.detections:
        assert iid in bev.instances and vpi.get(iid) == [state.pose]
    before = unknown_count(bev)
    state, obs, _ = step(state, Action.turn_left(np.pi / 2))
    integrate(bev, vpi, obs)
    assert unknown_count(bev) <= before


def test_integrate_overwrites_stale_cells():
    bev = BevMap.empty(3, 3)
    bev.state[1, 1] = OCCUPIED
    obs = Observation(Pose(0, 0), np.array([[1, 1]]), np.array([False]), np.array([-1]))
    integrate(bev, ViewpointIndex(), obs)
    assert bev.state[1, 1] == FREE


def test_viewpoint_nearest_dedupes_cells():
    vpi = ViewpointIndex()
    for p in [Pose(5, 5, 0.0), Pose(5, 5, 1.0), Pose(1, 1), Pose(9, 9), Pose(4, 4)]:
        vpi.add(7, p)
    assert [p.cell for p in vpi.nearest(7, (5.0, 5.0), k=3)] == [(5, 5), (4, 4), (1, 1)]
    assert 7 in vpi and vpi.nearest(8, (0, 0)) == []


def test_pgm_export_round_trip(tmp_path):
    bev = random_partial_map(3, 17)
    bev.semantic[2, 3] = 4
    bev.instances[4] = Instance(4, "sofa", "n/a", (2, 3))
    pgm, sidecar = bev.export(tmp_path / "map")
    raw = pgm.read_bytes()
    assert raw.startswith(b"P5\n17 17\n255\n")
    back = BevMap.load(sidecar)
    assert np.array_equal(back.state, bev.state)
    assert np.array_equal(back.semantic, bev.semantic)
    assert back.instances == bev.instances
    assert back.resolution == bev.resolution


def test_ground_truth_map_marks_walls_and_doors(small_episode):
    spec = small_episode.world
    bev = ground_truth_map(spec)
    assert not bev.unknown.any()
    assert np.array_equal(bev.occupied & spec.walls, spec.walls)
    for d in spec.doors:
        assert bev.instances[d.id].state == "open"
        assert all(bev.free[c] for c in d.blocked_cells)
    closed = ground_truth_map(spec, doors_open=False)
    for d in spec.doors:
        if d.state == "closed":
            assert all(closed.occupied[c] for c in d.blocked_cells)
