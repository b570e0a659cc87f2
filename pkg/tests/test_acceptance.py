"""Acceptance gate: one test per criterion, at the stated tolerances.

The heavy suites (criteria 1-3 share one 5-planner x 3-map x 20-seed grid at
N = 10,000) run serially so the per-run timing target is measured on an
otherwise idle core; expect 10-15 minutes of wall time for the full module.
"""

from __future__ import annotations

import heapq
import math
import time

import numpy as np
import pytest
from scipy import stats

from rrdt import bench as bn
from rrdt import maps
from rrdt import planners as pl
from rrdt.bandit import Arm, BanditConfig, apply_reward, decay_all, pick_arm
from rrdt.env import Environment, Scenario, load_map, load_scenario, segment_free
from rrdt.forest import Forest, PointIndex
from rrdt.kernels import rows_d2
from rrdt.local_sampler import DirectionDistribution, make_walker, sample_vmf
from rrdt.planners import EventKind
from rrdt.rng import substream

BUNDLED = ("room", "maze", "clutter")
PLANNERS = ("rrdt", "rrt", "birrt", "informed_rrt", "prm")
SEEDS = range(20)
RUNTIME_TARGET_S = 2.0

_ENVS: dict[str, Environment] = {}


def _env_for(name: str) -> Environment:
    if name not in _ENVS:
        _ENVS[name] = load_map(maps.bundled_map(name))
    return _ENVS[name]


def _passed(criterion: str, detail: str = ""):
    print(f"ACCEPTANCE {criterion}: PASS {detail}")


def first_solution_node(events) -> int | None:
    n = 0
    for e in events:
        if e.kind == EventKind.NODE_ADDED:
            n += 1
        elif e.kind == EventKind.SOLUTION_IMPROVED:
            return n
    return None


def _criteria123_worker(task):
    map_name, planner, seed = task
    scenario = load_scenario(maps.bundled_scenario(map_name))
    scenario.seed = seed
    environment = _env_for(map_name)
    t0 = time.perf_counter()
    result = pl.plan(scenario, environment, planner)
    elapsed = time.perf_counter() - t0
    ev = result.events
    nodes = ev.count(EventKind.NODE_ADDED)
    fails = ev.count(EventKind.FAILED_CONNECTION)
    cobs = ev.count(EventKind.SAMPLE_IN_OBSTACLE)
    solved = result.path is not None
    revalidated = True
    if solved:
        wp = result.path.waypoints
        revalidated = ((wp[0] == scenario.start).all()
                       and (wp[-1] == scenario.goal).all())
        for i in range(len(wp) - 1):
            if not segment_free(environment, wp[i], wp[i + 1],
                                scenario.collision_resolution):
                revalidated = False
        recost = sum(float(np.linalg.norm(wp[i + 1] - wp[i]))
                     for i in range(len(wp) - 1))
        if abs(recost - result.path.cost) > 1e-9 * max(1.0, recost):
            revalidated = False
    return {"map": map_name, "planner": planner, "seed": seed, "nodes": nodes,
            "fails": fails, "cobs": cobs, "total": nodes + fails + cobs,
            "time": elapsed, "solved": solved, "revalidated": revalidated,
            "first": first_solution_node(ev)}


@pytest.fixture(scope="module")
def grid_runs():
    tasks = [(m, p, s) for m in BUNDLED for p in PLANNERS for s in SEEDS]
    return [_criteria123_worker(t) for t in tasks]


def _select(rows, **match):
    return [r for r in rows if all(r[k] == v for k, v in match.items())]


def test_criterion_1_feasibility_and_runtime(grid_runs):
    solved = [r for r in grid_runs if r["solved"]]
    assert solved, "no run produced a path"
    bad = [r for r in solved if not r["revalidated"]]
    assert not bad, f"paths failed independent revalidation: {bad[:3]}"

    maze_rrdt = _select(grid_runs, map="maze", planner="rrdt")
    assert len(maze_rrdt) == 20
    unsolved = [r["seed"] for r in maze_rrdt if not r["solved"]]
    assert not unsolved, f"RRdT* missed maze solutions for seeds {unsolved}"

    slow = []
    for planner in PLANNERS:
        for map_name in BUNDLED:
            mean_t = float(np.mean([r["time"] for r in
                                    _select(grid_runs, map=map_name, planner=planner)]))
            if mean_t >= RUNTIME_TARGET_S:
                slow.append((planner, map_name, round(mean_t, 2)))
    assert not slow, f"mean runtime above the {RUNTIME_TARGET_S}s target: {slow}"
    _passed("1", f"({len(solved)} solved runs revalidated; maze RRdT* 20/20)")


def test_criterion_2_failed_connection_trend(grid_runs):
    for map_name in ("maze", "clutter"):
        mean = {p: float(np.mean([r["fails"] for r in
                                  _select(grid_runs, map=map_name, planner=p)]))
                for p in ("rrdt", "rrt", "birrt")}
        assert mean["rrdt"] <= 0.2 * mean["rrt"], (map_name, mean)
        assert mean["rrdt"] <= 0.2 * mean["birrt"], (map_name, mean)
        _passed("2", f"({map_name}: rrdt {mean['rrdt']:.0f} vs "
                     f"rrt {mean['rrt']:.0f} / birrt {mean['birrt']:.0f})")


def test_criterion_3_total_sampled_trend(grid_runs):
    mean = {p: float(np.mean([r["total"] for r in
                              _select(grid_runs, map="maze", planner=p)]))
            for p in ("rrdt", "rrt", "prm")}
    assert abs(mean["rrdt"] - mean["prm"]) <= 0.15 * mean["prm"], mean
    assert mean["rrdt"] <= 0.5 * mean["rrt"], mean
    _passed("3", f"(maze totals: rrdt {mean['rrdt']:.0f}, prm {mean['prm']:.0f}, "
                 f"rrt {mean['rrt']:.0f})")


# ---------------------------------------------------------------------------

def _criterion4_worker(task):
    planner, seed = task
    env = Environment(np.zeros((100, 100), dtype=np.uint8))
    scn = Scenario("", np.array([10.0, 50.0]), np.array([90.0, 50.0]),
                   5000, 4.0, seed=seed)
    result = pl.plan(scn, env, planner)
    costs = [e.best_cost for e in result.events
             if e.kind == EventKind.SOLUTION_IMPROVED]
    return {"planner": planner, "seed": seed,
            "final": result.path.cost if result.path else math.inf,
            "monotone": all(b < a for a, b in zip(costs, costs[1:]))}


def test_criterion_4_optimal_convergence():
    tasks = [(p, s) for p in ("rrdt", "rrt", "informed_rrt") for s in SEEDS]
    rows = [_criterion4_worker(t) for t in tasks]
    for planner in ("rrdt", "rrt", "informed_rrt"):
        finals = [r["final"] for r in rows if r["planner"] == planner]
        med = float(np.median(finals))
        assert med <= 1.05 * 80.0, (planner, med)
        assert all(r["monotone"] for r in rows if r["planner"] == planner)
        _passed("4", f"({planner} median {med:.2f} <= 84.0)")


# ---------------------------------------------------------------------------

def greedy_packing_count(environment: Environment, eps: float) -> int:
    """Greedy grid oracle: free cell centers kept pairwise > eps apart."""
    occ = environment.occupancy
    buckets: dict[tuple[int, int], list[tuple[float, float]]] = {}
    count = 0
    e2 = eps * eps
    for x in range(occ.shape[0]):
        col = occ[x]
        for y in range(occ.shape[1]):
            if col[y]:
                continue
            px, py = x + 0.5, y + 0.5
            bx, by = int(px // eps), int(py // eps)
            clear = True
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    for qx, qy in buckets.get((bx + dx, by + dy), ()):
                        if (px - qx) ** 2 + (py - qy) ** 2 <= e2:
                            clear = False
                            break
                    if not clear:
                        break
                if not clear:
                    break
            if clear:
                buckets.setdefault((bx, by), []).append((px, py))
                count += 1
    return count


def _criterion5_worker(map_name):
    scenario = load_scenario(maps.bundled_scenario(map_name))
    scenario.epsilon = 8.0
    scenario.node_budget = 50000
    scenario.max_iterations = 50000
    scenario.seed = 1
    environment = _env_for(map_name)
    result = pl.plan(scenario, environment, "rrdt")
    return {"map": map_name, "iterations": result.iterations,
            "trees_created": result.extras["trees_created"],
            "creation_iters": result.extras["tree_creation_iterations"],
            "packing": greedy_packing_count(environment, 8.0)}


def test_criterion_5_packing_bound():
    rows = [_criterion5_worker(m) for m in BUNDLED]
    for row in rows:
        assert row["iterations"] == 50000
        assert row["trees_created"] <= row["packing"], row
        span = row["iterations"] // 10
        early = sum(1 for it in row["creation_iters"] if it <= span)
        late = sum(1 for it in row["creation_iters"] if it > row["iterations"] - span)
        assert late <= 0.1 * early, (row["map"], early, late)
        _passed("5", f"({row['map']}: {row['trees_created']} trees <= "
                     f"{row['packing']} packing; rate {early} -> {late})")


# ---------------------------------------------------------------------------

def bessel_i(nu: float, x: float, terms: int = 200) -> float:
    total = 0.0
    for k in range(terms):
        total += math.exp((2 * k + nu) * math.log(x / 2.0)
                          - math.lgamma(k + 1) - math.lgamma(k + nu + 1))
    return total


def test_criterion_6_vmf_statistics():
    n = 100000
    for d in (2, 3, 6):
        mu = np.zeros(d)
        mu[0] = 1.0
        for kappa in (1.0, 10.0, 50.0):
            rng = substream(100 + d, f"acc6:{kappa}")
            dist = DirectionDistribution(mu, kappa)
            total = np.zeros(d)
            for _ in range(n):
                total += sample_vmf(dist, rng)
            rho = float(np.linalg.norm(total / n))
            expect = bessel_i(d / 2.0, kappa) / bessel_i(d / 2.0 - 1.0, kappa)
            assert abs(rho - expect) <= 0.02 * expect, (d, kappa, rho, expect)
        # kappa = 0 uniformity: planar angle of the first two coordinates
        rng = substream(200 + d, "acc6:uniform")
        dist = DirectionDistribution(mu, 0.0)
        bins = np.zeros(16)
        for _ in range(n):
            v = sample_vmf(dist, rng)
            angle = math.atan2(v[1], v[0])
            bins[min(15, int((angle + math.pi) / (2 * math.pi / 16)))] += 1
        chi2 = float(((bins - n / 16) ** 2 / (n / 16)).sum())
        assert chi2 < stats.chi2.ppf(0.99, 15), (d, chi2)
    _passed("6", "(Bessel-ratio within 2% for kappa in {1,10,50}, d in {2,3,6})")


# ---------------------------------------------------------------------------

def test_criterion_7_bandit_mechanics():
    # decay-only trajectories match the closed form to 1e-12
    for decay in (0.95, 0.999):
        cfg = BanditConfig(decay=decay)
        arm = Arm(id=0, sampler=make_walker(np.zeros(2), substream(0, "a")),
                  probability=1.0, pulls=0, home_tree=0)
        for k in range(1, 2303):
            decay_all([arm], cfg)
            assert abs(arm.probability - decay ** k) < 1e-12

    # pick_arm frequencies within 1% at 1e5 draws
    rng = substream(1, "acc7")
    arms = [Arm(id=i, sampler=make_walker(np.zeros(2), substream(i, "b")),
                probability=p, pulls=0, home_tree=0)
            for i, p in enumerate((0.1, 0.3, 0.6))]
    counts = np.zeros(3)
    n = 100000
    for _ in range(n):
        counts[pick_arm(arms, rng).id] += 1
    for i, p in enumerate((0.1, 0.3, 0.6)):
        assert abs(counts[i] / n - p) < 0.01

    # the three restart branches are exercised by the bandit unit tests with
    # forced inputs; assert the same forced outcomes here end to end
    from test_bandit import (test_restart_far_sample_founds_new_tree,
                             test_restart_join_relocates_arm,
                             test_restart_noop_when_all_healthy)
    test_restart_noop_when_all_healthy()
    test_restart_far_sample_founds_new_tree()
    test_restart_join_relocates_arm()
    _passed("7", "(closed-form decay, 1% selection frequencies, 3 branches)")


# ---------------------------------------------------------------------------

def _heapq_dijkstra(n, edges, source=0):
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
            if d + w < dist[v]:
                dist[v] = d + w
                heapq.heappush(heap, (d + w, v))
    return dist


def test_criterion_8_oracle_equivalences():
    # NN index versus linear scan: 1000 nodes x 100 queries, exact
    rng = np.random.default_rng(42)
    idx = PointIndex(2)
    pts = rng.uniform(0, 400, size=(1000, 2))
    for p in pts:
        idx.add(p)
    for _ in range(100):
        q = rng.uniform(0, 400, 2)
        d2 = rows_d2(pts, q)
        assert idx.nearest(q) == int(np.nonzero(d2 == d2.min())[0].min())
        r = float(rng.uniform(0, 60))
        assert (idx.within_radius(q, r) == np.nonzero(d2 <= r * r)[0]).all()

    # PRM* roadmap query versus an independent Dijkstra, exact
    environment = _env_for("room")
    scenario = load_scenario(maps.bundled_scenario("room"))
    scenario.node_budget = 750
    scenario.seed = 8
    result = pl.plan(scenario, environment, "prm")
    pts, (eu, ev, ew) = result.extras["roadmap"]
    dist = _heapq_dijkstra(len(pts), zip(eu.tolist(), ev.tolist(), ew.tolist()))
    assert result.path is not None
    assert result.path.cost == dist[1]

    # rewire choose-parent versus exhaustive enumeration on small instances
    env = Environment(np.zeros((40, 40), dtype=np.uint8))
    rng = np.random.default_rng(43)
    for _ in range(40):
        f = Forest(env, 8.0, 0.5)
        nodes = [f.insert_root(rng.uniform(5, 35, 2), "root")]
        for _ in range(int(rng.integers(2, 11))):
            parent = int(rng.choice(nodes))
            nodes.append(f.attach(parent, np.clip(
                f.config(parent) + rng.uniform(-4, 4, 2), 0.5, 39.5)))
        q = np.clip(f.config(int(rng.choice(nodes))) + rng.uniform(-3, 3, 2),
                    0.5, 39.5)
        new = f.attach(f.nearest(q), q)
        f.rewire(new)
        r = f.rewire_radius()
        best = min([f.cost_to_root(f.parent(new))
                    + float(np.linalg.norm(f.config(f.parent(new)) - q))]
                   + [f.cost_to_root(n) + float(np.linalg.norm(f.config(n) - q))
                      for n in nodes if np.linalg.norm(f.config(n) - q) <= r])
        assert abs(f.cost_to_root(new) - best) < 1e-9
    _passed("8", "(NN exact, PRM* Dijkstra exact, rewire choose-parent exact)")


# ---------------------------------------------------------------------------

def test_criterion_9_bench_determinism(tmp_path):
    exp = tmp_path / "exp.txt"
    exp.write_text(
        f"map_path = {maps.bundled_map('maze')}\n"
        "planners = rrdt, prm\n"
        "pairs = 2\nrepetitions = 2\nnode_budget = 400\nbase_seed = 9\n"
        "epsilon = 8.0\nrender = none\n")
    spec = bn.parse_experiment(exp)
    bn.run_experiment(spec, out_dir=tmp_path / "a")
    bn.run_experiment(spec, out_dir=tmp_path / "b")
    bn.run_experiment(spec, jobs=2, out_dir=tmp_path / "c")
    for name in ("metrics.csv", "summary.csv"):
        a = (tmp_path / "a" / name).read_bytes()
        assert a == (tmp_path / "b" / name).read_bytes(), name
        assert a == (tmp_path / "c" / name).read_bytes(), f"{name} (parallel)"
    _passed("9", "(byte-identical metrics.csv and summary.csv, jobs 1 and 2)")
