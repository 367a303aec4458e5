"""End-to-end acceptance checks. Each test prints one PASS/FAIL line in the terminal summary."""
from __future__ import annotations

import math
import time
from pathlib import Path

import numpy as np
import pytest

import conftest
from oracles import (
    adjacency,
    ball_basins,
    brute_esdf,
    exhaustive_assignment,
    graph_dijkstra,
    grid_dijkstra,
    rand_map,
)
from prompt_fixture import fixture_prompt
from scenes import (
    fixture_scene_graph,
    random_assignment_fixture,
    random_bev,
    random_chain_graph,
    through_wall_graph,
)
from scenesearch.agent import (
    ChatClient,
    ChatEndpointConfig,
    ChatPolicy,
    GreedyPolicy,
    HighLevelAction,
    load_trace,
    parse_reply,
    replay_cost,
    run_episode,
)
from scenesearch.agent.planning import astar, traversable
from scenesearch.cli.config import RunConfig
from scenesearch.cli.mock_server import MockChatServer, Script
from scenesearch.cli.suite import run_suite
from scenesearch.grid import cells_within
from scenesearch.mapping import ground_truth_map
from scenesearch.metrics import MAX_BUDGET, auc_e, efficiency_curve, purity, spl, success_rate
from scenesearch.scenegraph import LAMBDA, DoorDensity, assign_object, door_centers, separate_rooms
from scenesearch.textenc import ActionRecord, bin_distance, realign_history, retry_message
from scenesearch.voronoi import MIN_CLEARANCE_CELLS, compute_esdf, extract_gvd, sparsify, voronoi_graph
from scenesearch.world import LayoutConfig, default_priors, enrich_episode, generate_layout

GOLDEN = Path(__file__).parent / "golden" / "prompt_fixture.txt"
POLICY_SUITE = dict(episodes=175, worlds=7, seed=1000)


def report(n: int, ok: bool, detail: str) -> None:
    conftest.ACCEPTANCE.append(f"AC{n} {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def policy_suites(tmp_path_factory):
    base = tmp_path_factory.mktemp("policy_suite")
    out, timings = {}, {}
    for name in ("oracle", "greedy", "random"):
        t0 = time.perf_counter()
        out[name] = run_suite(RunConfig(policy=name, out=str(base / name), **POLICY_SUITE))
        timings[name] = time.perf_counter() - t0
    return out, timings


def test_ac1_esdf_exact():
    maps = [rand_map(seed) for seed in range(50)]
    t0 = time.perf_counter()
    fields = [compute_esdf(bev).clearance for bev in maps]
    elapsed = time.perf_counter() - t0
    mismatched = sum(not np.array_equal(f, brute_esdf(bev.free)) for f, bev in zip(fields, maps))
    report(1, mismatched == 0 and elapsed < 5.0,
           f"ESDF == brute force on {50 - mismatched}/50 maps, {elapsed:.2f}s")


def test_ac2_gvd_two_basins():
    cells, bad_basin, too_close = 0, 0, 0
    for seed in range(50):
        bev = rand_map(seed)
        df = compute_esdf(bev)
        occ = ~bev.free
        for r, c in np.argwhere(extract_gvd(df, bev.free)):
            dmin, groups = ball_basins(occ, (r, c))
            cells += 1
            bad_basin += groups < 2
            too_close += dmin < MIN_CLEARANCE_CELLS
    report(2, cells > 0 and bad_basin == 0 and too_close == 0,
           f"{cells} GVD cells: {bad_basin} without two basins within 1 cell, {too_close} within 2 cells of an obstacle")


def test_ac3_sparsify_preserves_distances():
    pairs, bad = 0, 0
    for seed in range(20):
        g = random_chain_graph(seed)
        s = sparsify(g)
        a_full, a_sparse = adjacency(g.graph), adjacency(s.graph)
        for u in s.graph.nodes:
            d_full, d_sparse = graph_dijkstra(a_full, u), graph_dijkstra(a_sparse, u)
            for v in s.graph.nodes:
                pairs += 1
                bad += not math.isclose(d_full.get(v, math.inf), d_sparse.get(v, math.inf), rel_tol=1e-12)
    report(3, bad == 0, f"{pairs - bad}/{pairs} retained pair distances preserved on 20 graphs")


def test_ac4_astar_optimal():
    bad, solved = 0, 0
    for seed in range(100):
        rng = np.random.default_rng(10_000 + seed)
        trav = traversable(random_bev(rng), inflation_m=0.1)
        free = np.argwhere(trav)
        start = tuple(free[rng.integers(len(free))])
        centre = tuple(free[rng.integers(len(free))])
        radius = float(rng.integers(0, 5))
        goal = cells_within(trav.shape, centre, radius) & trav
        path = astar(trav, start, goal, centre, radius)
        oracle = grid_dijkstra(trav, start, goal)
        if oracle is None:
            bad += path is not None
            continue
        solved += 1
        straight = sum(1 for a, b in zip(path, path[1:]) if a[0] == b[0] or a[1] == b[1])
        bad += (straight, len(path) - 1 - straight) != oracle or not goal[path[-1]]
    report(4, bad == 0, f"A* matches Dijkstra on {100 - bad}/100 grids ({solved} reachable)")


def test_ac5_room_separation():
    exact, purities = 0, []
    for seed in range(20):
        n = 2 + seed % 7
        spec = generate_layout(seed, LayoutConfig(rooms=(n, n)))
        bev = ground_truth_map(spec)
        centres = door_centers(bev)
        g, _ = voronoi_graph(bev, spec.agent_start.cell, centres)
        part = separate_rooms(g, DoorDensity(np.array(centres).reshape(-1, 2)))
        exact += len(part.rooms) == len(spec.rooms)
        purities.append(purity([[int(spec.room_grid[g.cell(x)]) for x in room] for room in part.rooms]))
    share, mean_purity = exact / 20, float(np.mean(purities))
    report(5, share >= 0.9 and mean_purity >= 0.9,
           f"room count exact on {exact}/20 layouts, mean purity {mean_purity:.3f}")


def test_ac6_object_assignment():
    bad = 0
    for seed in range(200):
        g, part, position, viewpoints = random_assignment_fixture(seed)
        best, argbest = exhaustive_assignment(g.graph, part.label_of(), position, viewpoints, g.resolution, LAMBDA)
        a = assign_object(g, part, position, viewpoints)
        bad += not (math.isclose(a.cost, best, rel_tol=1e-12, abs_tol=1e-12) and a.node in argbest)
    g, part, position, viewpoints = through_wall_graph()
    in_room = assign_object(g, part, position, viewpoints).room == 0
    report(6, bad == 0 and in_room,
           f"{200 - bad}/200 assignments equal the exhaustive minimum; through-wall fixture in-room: {in_room}")


def test_ac7_distance_bins():
    cases = {3.0: "very close", 10.0: "near", 20.0: "far", math.nextafter(20.0, math.inf): "distant"}
    got = {d: bin_distance(d) for d in cases}
    report(7, got == cases, ", ".join(f"{d!r}->{w}" for d, w in got.items()))


def test_ac8_auc_endpoints(policy_suites):
    ones = auc_e(efficiency_curve([1.0] * 25))
    zeros = auc_e(efficiency_curve([math.inf] * 25))
    suites, _ = policy_suites
    violations = []
    for name, s in suites.items():
        rows = s.results
        sr = success_rate([r.success for r in rows])
        a = auc_e(s.curve)
        p = spl([(r.success, r.distance_m, r.shortest_m) for r in rows])
        if np.any(np.diff(s.curve.fraction) < 0) or a > sr + 1e-12 or p > sr + 1e-12:
            violations.append(name)
    ok = abs(ones - 1.0) <= 1 / MAX_BUDGET and zeros == 0.0 and not violations
    report(8, ok, f"all-success {ones:.4f}, all-fail {zeros:.1f}, monotone with AUC-E<=SR and SPL<=SR on "
                  f"{len(suites) - len(violations)}/{len(suites)} suites")


def test_ac9_policy_ordering(policy_suites):
    suites, timings = policy_suites
    s = {k: v.report for k, v in suites.items()}
    total = sum(timings.values())
    ok = (s["oracle"]["success_rate"] == 1.0
          and s["oracle"]["auc_e"] > s["greedy"]["auc_e"]
          and s["oracle"]["auc_e"] > s["random"]["auc_e"]
          and s["random"]["success_rate"] >= 0.8
          and total < 600)
    detail = "  ".join(f"{k}: SR {v['success_rate']:.3f} AUC-E {v['auc_e']:.3f}" for k, v in s.items())
    report(9, ok, f"{detail}  ({total:.0f}s)")


def test_ac10_agent_loop_with_mock_chat():
    episode = enrich_episode(generate_layout(6, LayoutConfig(rooms=(3, 3))), default_priors(), 6)
    client = lambda url: ChatPolicy(ChatClient(ChatEndpointConfig(base_url=url, timeout=10.0, retries=0)))
    greedy = run_episode(episode, GreedyPolicy())
    script = [l["action"] for l in greedy.trace if l.get("kind") == "step" and l["step"] > 0] + ["done()"]
    with MockChatServer(Script(script)) as srv:
        scripted = run_episode(episode, client(srv.url))
    with MockChatServer(Script(["no idea"] * 6)) as srv:
        garbage = run_episode(episode, client(srv.url))
        retry = srv.prompts[1]
    expected = "The last action no idea failed. Please try another command."
    rec = ActionRecord("explore", ("unexplored room",), (19, 44), None, "success")
    sg = fixture_scene_graph()
    relabeled = realign_history([rec], sg) == ["explore(room) -> success"]
    sg.rooms[2].label = "attic"
    relabeled &= realign_history([rec], sg) == ["explore(attic) -> success"]
    checks = {
        "scripted success": scripted.success and scripted.reason == "done",
        "stuck after 5": garbage.reason == "stuck" and garbage.steps == 5,
        "retry message": retry == expected == retry_message("no idea"),
        "relabeled history": relabeled,
    }
    report(10, all(checks.values()), ", ".join(f"{k}: {'ok' if v else 'no'}" for k, v in checks.items()))


def test_ac11_trace_accounting(policy_suites):
    suites, _ = policy_suites
    checked, bad = 0, 0
    for name, s in suites.items():
        for i, r in enumerate(s.results):
            trace = load_trace(s.out / "traces" / f"ep_{i:04d}.jsonl")
            checked += 1
            bad += replay_cost(trace) != r.weighted_cost or trace[-1]["weighted_cost"] != r.weighted_cost
    report(11, checked > 0 and bad == 0, f"trace replay equals reported cost on {checked - bad}/{checked} episodes")


def test_ac12_golden_prompt():
    prompt = fixture_prompt()
    identical = prompt.render() == GOLDEN.read_text()
    sg = fixture_scene_graph()
    names, failed = 0, []
    for line in prompt.rooms:
        label = line[2:].split(" (", 1)[0]
        room = sg.room_by_label(label)
        names += 1
        if parse_reply(f"explore({label})", sg) != HighLevelAction("explore", label, room_id=room.id):
            failed.append(label)
        for item in line.split(": ", 1)[1].split(", "):
            if item == "unexplored area":
                continue
            names += 1
            action = parse_reply(f"navigate({label}, {item})", sg)
            if not isinstance(action, HighLevelAction) or action.room_id != room.id or not item.endswith(action.obj):
                failed.append(item)
    report(12, identical and not failed,
           f"golden prompt byte-identical: {identical}; {names - len(failed)}/{names} names parse back")
