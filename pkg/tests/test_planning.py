from __future__ import annotations

import math

import numpy as np
import pytest

from oracles import grid_dijkstra
from scenes import random_bev
from scenesearch.agent.planning import astar, distance_map, path_cost, region_distance, traversable
from scenesearch.grid import (
    SQRT2,
    cells_within,
    clearance_cells,
    disk_offsets,
    inflate,
    inflation_cells,
    line_of_sight,
    visible_region,
)
from scenesearch.mapping import FREE, OCCUPIED, UNKNOWN, BevMap


def counts(path):
    straight = sum(1 for a, b in zip(path, path[1:]) if a[0] == b[0] or a[1] == b[1])
    return straight, len(path) - 1 - straight


def valid_path(path, trav):
    for a, b in zip(path, path[1:]):
        assert max(abs(a[0] - b[0]), abs(a[1] - b[1])) == 1
    assert all(trav[c] for c in path[1:])


@pytest.mark.parametrize("seed", range(20))
def test_astar_matches_dijkstra(seed):
    rng = np.random.default_rng(seed)
    trav = traversable(random_bev(rng), inflation_m=0.1)
    cells = np.argwhere(trav)
    start = tuple(cells[rng.integers(len(cells))])
    centre = tuple(cells[rng.integers(len(cells))])
    radius = float(rng.integers(0, 5))
    goal = cells_within(trav.shape, centre, radius) & trav
    path = astar(trav, start, goal, centre, radius)
    oracle = grid_dijkstra(trav, start, goal)
    if oracle is None:
        assert path is None
        return
    valid_path(path, trav)
    assert goal[path[-1]]
    assert counts(path) == oracle


def test_astar_start_in_goal():
    trav = np.ones((5, 5), bool)
    goal = np.zeros_like(trav)
    goal[2, 2] = True
    assert astar(trav, (2, 2), goal) == [(2, 2)]


def test_astar_unreachable():
    trav = np.ones((5, 5), bool)
    trav[:, 2] = False
    goal = np.zeros_like(trav)
    goal[0, 4] = True
    assert astar(trav, (0, 0), goal) is None


def test_astar_start_outside_traversable_is_usable():
    trav = np.ones((5, 5), bool)
    trav[0, 0] = False
    goal = np.zeros_like(trav)
    goal[4, 4] = True
    path = astar(trav, (0, 0), goal)
    assert path[0] == (0, 0) and path[-1] == (4, 4)
    assert math.isclose(path_cost(path), 4 * SQRT2)


def test_path_cost_counts_moves():
    assert path_cost([(0, 0), (0, 1), (1, 2), (2, 2)]) == 2 + SQRT2
    assert path_cost([(3, 3)]) == 0


def test_distance_map_matches_dijkstra():
    rng = np.random.default_rng(7)
    trav = traversable(random_bev(rng, 25), 0.1)
    start = tuple(np.argwhere(trav)[0])
    dist = distance_map(trav, start)
    for cell in map(tuple, np.argwhere(trav)[::17]):
        goal = np.zeros_like(trav)
        goal[cell] = True
        oracle = grid_dijkstra(trav, start, goal)
        expected = math.inf if oracle is None else oracle[0] + oracle[1] * SQRT2
        assert math.isclose(dist[cell], expected, rel_tol=1e-12) or dist[cell] == expected == math.inf


def test_region_distance():
    dist = np.array([[0.0, 1.0], [2.0, np.inf]])
    assert region_distance(dist, np.array([[False, True], [True, False]])) == 1.0
    assert region_distance(dist, np.zeros((2, 2), bool)) == math.inf


def test_traversable_inflation_and_unknown():
    bev = BevMap.empty(9, 9)
    bev.state[:] = FREE
    bev.state[4, 4] = OCCUPIED
    bev.state[0, 0] = UNKNOWN
    trav = traversable(bev, 0.1)  # two cells at 0.075 m
    assert not trav[4, 6] and trav[4, 7]
    assert not trav[0, 0]
    assert traversable(bev, 0.1, optimistic=True)[0, 0]


def test_inflation_cells_rounds_up():
    assert inflation_cells(0.1, 0.075) == 2
    assert inflation_cells(0.15, 0.075) == 2
    assert inflation_cells(0.0, 0.075) == 0


def test_clearance_and_inflate():
    occ = np.zeros((5, 5), bool)
    assert np.allclose(clearance_cells(occ), math.hypot(5, 5))
    occ[2, 2] = True
    assert inflate(occ, 1).sum() == 5


def test_disk_offsets_and_cells_within():
    offs = disk_offsets(1.5)
    assert len(offs) == 9
    mask = cells_within((7, 7), (3, 3), 1.0)
    assert mask.sum() == 5


def test_line_of_sight_blocked_by_wall():
    occ = np.zeros((10, 10), bool)
    occ[:, 5] = True
    assert not line_of_sight(occ, (2, 2), (2, 8))
    assert line_of_sight(occ, (2, 2), (8, 4))


def test_visible_region_excludes_own_footprint():
    occ = np.zeros((10, 10), bool)
    occ[4:6, 4:6] = True
    own = occ.copy()
    cand = np.ones_like(occ) & ~occ
    vis = visible_region(occ, cand, (4.5, 4.5), own)
    assert vis[0, 0] and vis[9, 9]
