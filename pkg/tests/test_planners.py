"""Planner loops: budgets, event accounting, determinism, solution
feasibility, and planner-specific contracts."""

from __future__ import annotations

import heapq
import math

import numpy as np
import pytest

from rrdt import planners as pl
from rrdt.env import Environment, Scenario, ScenarioError, segment_free
from rrdt.planners import EventKind, _EllipsoidSampler
from rrdt.rng import substream

ALL = sorted(pl.PLANNERS)


def empty_env(size=100):
    return Environment(np.zeros((size, size), dtype=np.uint8))


def walled_env():
    """100x100 with a wall at x in [50, 52), door at y in [40, 60)."""
    occ = np.zeros((100, 100), dtype=np.uint8)
    occ[50:52, :] = 1
    occ[50:52, 40:60] = 0
    return Environment(occ)


def scenario(env, budget=400, seed=0, eps=4.0, **kw):
    return Scenario("", np.array([10.0, 50.0]), np.array([90.0, 50.0]),
                    budget, eps, seed=seed, **kw)


def counts(result):
    ev = result.events
    return (ev.count(EventKind.NODE_ADDED), ev.count(EventKind.FAILED_CONNECTION),
            ev.count(EventKind.SAMPLE_IN_OBSTACLE))


def first_solution_node(result):
    n = 0
    for e in result.events:
        if e.kind == EventKind.NODE_ADDED:
            n += 1
        elif e.kind == EventKind.SOLUTION_IMPROVED:
            return n
    return None


@pytest.mark.parametrize("name", ALL)
def test_zero_budget_adds_nothing(name):
    env = empty_env()
    res = pl.plan(scenario(env, budget=0), env, name)
    assert res.nodes_added == 0
    assert counts(res)[0] == 0
    assert res.path is None or res.path.cost == 0.0


@pytest.mark.parametrize("name", ALL)
def test_budget_exactness(name):
    env = walled_env()
    res = pl.plan(scenario(env, budget=300, seed=2), env, name)
    assert res.nodes_added == 300
    assert counts(res)[0] == 300


@pytest.mark.parametrize("name", ALL)
def test_event_accounting_identity(name):
    env = walled_env()
    res = pl.plan(scenario(env, budget=300, seed=3), env, name)
    nodes, fails, cobs = counts(res)
    if name == "prm":
        assert fails == 0
    if name in ("rrt", "informed_rrt"):
        # one primary event per iteration
        assert nodes + fails + cobs == res.iterations
    if name == "rrdt":
        # restart iterations may bundle several obstacle draws with the node
        assert nodes + fails <= res.iterations <= nodes + fails + cobs


@pytest.mark.parametrize("name", ALL)
def test_determinism_same_seed(name):
    env = walled_env()
    r1 = pl.plan(scenario(env, budget=250, seed=11), env, name)
    r2 = pl.plan(scenario(env, budget=250, seed=11), env, name)
    assert list(r1.events) == list(r2.events)
    if r1.path is None:
        assert r2.path is None
    else:
        assert (r1.path.waypoints == r2.path.waypoints).all()
        assert r1.path.cost == r2.path.cost
    r3 = pl.plan(scenario(env, budget=250, seed=12), env, name)
    assert list(r3.events) != list(r1.events)


@pytest.mark.parametrize("name", ALL)
def test_paths_feasible_and_anchored(name):
    env = walled_env()
    scn = scenario(env, budget=2500, seed=4)
    res = pl.plan(scn, env, name)
    assert res.path is not None, f"{name} failed an easy corridor problem"
    wp = res.path.waypoints
    assert (wp[0] == scn.start).all() and (wp[-1] == scn.goal).all()
    for i in range(len(wp) - 1):
        assert segment_free(env, wp[i], wp[i + 1], scn.collision_resolution)
    recost = sum(float(np.linalg.norm(wp[i + 1] - wp[i])) for i in range(len(wp) - 1))
    assert abs(recost - res.path.cost) < 1e-9 * max(1.0, recost)


@pytest.mark.parametrize("name", ALL)
def test_best_cost_monotone(name):
    env = walled_env()
    res = pl.plan(scenario(env, budget=1500, seed=5), env, name)
    costs = [e.best_cost for e in res.events if e.kind == EventKind.SOLUTION_IMPROVED]
    assert all(b < a for a, b in zip(costs, costs[1:]))


@pytest.mark.parametrize("name", ALL)
def test_invalid_scenario_rejected(name):
    env = walled_env()
    scn = scenario(env)
    scn.start = np.array([51.0, 10.0])  # inside the wall
    with pytest.raises(ScenarioError):
        pl.plan(scn, env, name)


def test_unknown_planner_rejected():
    env = empty_env()
    with pytest.raises(ScenarioError):
        pl.plan(scenario(env), env, "dijkstra")


def test_iteration_cap_flags_run():
    # an enclosed start region forces the cap before the budget fills
    occ = np.zeros((20, 20), dtype=np.uint8)
    occ[4:6, :] = 1  # full wall, start boxed into x < 4
    env = Environment(occ)
    scn = Scenario("", np.array([2.0, 10.0]), np.array([2.0, 2.0]), 5000, 2.0,
                   seed=0, max_iterations=300)
    res = pl.plan(scn, env, "rrt")
    assert res.capped
    assert res.nodes_added < 5000
    assert res.iterations == 300


# ---------------------------------------------------------------------------
# RRdT*-specific behavior

def test_rrdt_keeps_arm_count_and_trees():
    env = walled_env()
    scn = scenario(env, budget=600, seed=6, num_arms=8)
    res = pl.plan(scn, env, "rrdt")
    arms = res.extras["arms"]
    assert len(arms) == 8
    assert len({a.id for a in arms}) == 8
    forest = res.forest
    assert forest.trees_created == res.extras["trees_created"]
    # trees are never deleted: every canonical id ever created still answers
    live = {forest.tree_of(i) for i in range(len(forest))}
    assert len(live) <= forest.trees_created
    for arm in arms:
        assert forest.tree_size(arm.home_tree) >= 1


def test_rrdt_instant_solution_when_goal_adjacent():
    env = empty_env()
    scn = Scenario("", np.array([50.0, 50.0]), np.array([52.0, 50.0]), 10, 4.0, seed=1)
    res = pl.plan(scn, env, "rrdt")
    assert res.path is not None
    assert res.path.cost == pytest.approx(2.0)


# ---------------------------------------------------------------------------
# RRT* / Informed RRT*

def test_rrt_single_tree_invariant():
    env = walled_env()
    res = pl.plan(scenario(env, budget=400, seed=7), env, "rrt")
    forest = res.forest
    assert forest.trees_created == 1
    assert all(forest.in_root_tree(i) for i in range(len(forest)))


def test_informed_prefix_identical_to_rrt():
    env = walled_env()
    scn = scenario(env, budget=1800, seed=8)
    r_rrt = pl.plan(scn, env, "rrt")
    r_inf = pl.plan(scn, env, "informed_rrt")
    first = next(i for i, e in enumerate(r_inf.events)
                 if e.kind == EventKind.SOLUTION_IMPROVED)
    assert list(r_inf.events)[:first + 1] == list(r_rrt.events)[:first + 1]


def test_ellipsoid_sampler_contract():
    rng = substream(9, "ell")
    start, goal = np.array([10.0, 50.0]), np.array([90.0, 50.0])
    sampler = _EllipsoidSampler(start, goal)
    c_min = float(np.linalg.norm(goal - start))
    lower, upper = np.zeros(2), np.array([100.0, 100.0])
    for c_best in (c_min * 1.4, c_min * 1.05):
        for _ in range(500):
            q = sampler.sample_in_bounds(rng, c_best, lower, upper)
            assert np.linalg.norm(q - start) + np.linalg.norm(q - goal) <= c_best + 1e-9
            assert (q >= lower).all() and (q < upper).all()
    # degenerate ellipse collapses onto the segment
    for _ in range(200):
        q = sampler.sample_in_bounds(rng, c_min, lower, upper)
        t = (q - start) @ (goal - start) / c_min**2
        assert -1e-9 <= t <= 1 + 1e-9
        assert np.linalg.norm(start + t * (goal - start) - q) < 1e-6


def test_ellipsoid_sampler_high_dim_rotation():
    rng = substream(10, "ell")
    start, goal = np.zeros(4), np.array([3.0, 4.0, 0.0, 0.0])
    sampler = _EllipsoidSampler(start, goal)
    rot = sampler.rotation
    assert np.allclose(rot @ rot.T, np.eye(4), atol=1e-12)
    assert np.linalg.det(rot) == pytest.approx(1.0)
    for _ in range(300):
        q = sampler.sample_in_bounds(rng, 7.0, np.full(4, -50.0), np.full(4, 50.0))
        assert np.linalg.norm(q - start) + np.linalg.norm(q - goal) <= 7.0 + 1e-9


# ---------------------------------------------------------------------------
# Bi-RRT*

def test_birrt_balance_on_symmetric_empty_map():
    occ = np.zeros((1000, 1000), dtype=np.uint8)
    env = Environment(occ)
    scn = Scenario("", np.array([100.0, 500.0]), np.array([900.0, 500.0]),
                   400, 5.0, seed=1)
    res = pl.plan(scn, env, "birrt")
    forest = res.forest
    sizes: dict[int, int] = {}
    for i in range(len(forest)):
        t = forest.tree_of(i)
        sizes[t] = sizes.get(t, 0) + 1
    assert len(sizes) == 2, "trees met early; balance check needs them apart"
    lo, hi = sorted(sizes.values())
    total = lo + hi
    assert abs(hi - total / 2) <= 0.1 * total / 2


def test_birrt_connects_iff_feasible():
    env = walled_env()
    res = pl.plan(scenario(env, budget=2500, seed=9), env, "birrt")
    assert res.path is not None
    # sealed wall: no connection possible
    occ = np.zeros((100, 100), dtype=np.uint8)
    occ[50:52, :] = 1
    sealed = Environment(occ)
    scn = scenario(sealed, budget=400, seed=9, max_iterations=2000)
    res = pl.plan(scn, sealed, "birrt")
    assert res.path is None


# ---------------------------------------------------------------------------
# PRM*

def dijkstra_oracle(n, edges, source=0):
    adj: dict[int, list[tuple[int, float]]] = {i: [] for i in range(n)}
    for u, v, w in edges:
        adj[u].append((v, w))
        adj[v].append((u, w))
    dist = [math.inf] * n
    dist[source] = 0.0
    heap = [(0.0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for v, w in adj[u]:
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def test_prm_no_solution_before_250():
    env = empty_env()
    res = pl.plan(scenario(env, budget=240, seed=10), env, "prm")
    assert res.path is None
    assert all(e.kind != EventKind.SOLUTION_IMPROVED for e in res.events)
    res = pl.plan(scenario(env, budget=250, seed=10), env, "prm")
    assert first_solution_node(res) == 250


def test_prm_query_matches_independent_dijkstra():
    env = walled_env()
    scn = scenario(env, budget=500, seed=11)
    res = pl.plan(scn, env, "prm")
    pts, (eu, ev, ew) = res.extras["roadmap"]
    edges = list(zip(eu.tolist(), ev.tolist(), ew.tolist()))
    dist = dijkstra_oracle(len(pts), edges)
    assert res.path is not None
    assert res.path.cost == dist[1]  # exact equality, same edge set


def test_prm_emits_no_failed_connections():
    env = walled_env()
    res = pl.plan(scenario(env, budget=300, seed=12), env, "prm")
    assert counts(res)[1] == 0


# ---------------------------------------------------------------------------
# cross-planner contrasts

def bug_trap_env():
    """Enclosure with a narrow mouth facing away from the start."""
    occ = np.zeros((100, 100), dtype=np.uint8)
    occ[44:80, 30:33] = 1
    occ[44:80, 67:70] = 1
    occ[44:47, 30:70] = 1
    occ[77:80, 30:70] = 1
    occ[77:80, 46:54] = 0  # mouth on the far side
    return Environment(occ)


def test_bug_trap_failed_connection_contrast():
    # tree expansion restricted by the trap: the single tree wastes far more
    # connection attempts than the disjointed-tree forest at equal N
    env = bug_trap_env()
    scn = Scenario("", np.array([20.0, 50.0]), np.array([60.0, 50.0]),
                   1500, 4.0, seed=0)
    rrt_fails = rrdt_fails = 0
    for seed in (0, 1, 2):
        scn.seed = seed
        rrt_fails += counts(pl.plan(scn, env, "rrt"))[1]
        rrdt_fails += counts(pl.plan(scn, env, "rrdt"))[1]
    assert rrt_fails > 3 * rrdt_fails


def test_planners_work_in_three_dimensions():
    occ = np.zeros((20, 20, 20), dtype=np.uint8)
    occ[9:11, :, :] = 1
    occ[9:11, 8:12, 8:12] = 0  # window through the wall
    env = Environment(occ)
    scn = Scenario("", np.array([4.0, 10.0, 10.0]), np.array([16.0, 10.0, 10.0]),
                   600, 2.5, seed=3)
    for name in ALL:
        res = pl.plan(scn, env, name)
        assert res.nodes_added == 600
        if res.path is not None:
            wp = res.path.waypoints
            assert wp.shape[1] == 3
            for i in range(len(wp) - 1):
                assert segment_free(env, wp[i], wp[i + 1], scn.collision_resolution)
