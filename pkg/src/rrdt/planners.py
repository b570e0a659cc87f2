"""Planner main loops: RRdT* plus the RRT*, Bi-RRT*, Informed RRT* and PRM*
baselines, all emitting the same per-iteration metric events.

Every run consumes named Philox sub-streams ("global", "arms", one per
walker), so a fixed scenario seed reproduces the event log bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _csgraph_dijkstra

from . import bandit as bd
from . import env as envmod
from . import kernels
from . import local_sampler as ls
from .env import SAMPLE_REJECTION_CAP, Environment, Scenario, ScenarioError
from .forest import Forest, Path, PointIndex, default_gamma
from .rng import derive_seed, substream


class EventKind(IntEnum):
    NODE_ADDED = 0
    FAILED_CONNECTION = 1
    SAMPLE_IN_OBSTACLE = 2
    SOLUTION_IMPROVED = 3


class PlannerEvent(NamedTuple):
    iteration: int
    kind: EventKind
    best_cost: float | None = None


class EventLog:
    """Append-only event sequence with O(1) per-kind counters."""

    __slots__ = ("_items", "_counts")

    def __init__(self):
        self._items: list[PlannerEvent] = []
        self._counts = [0, 0, 0, 0]

    def append(self, iteration: int, kind: EventKind, best_cost: float | None = None):
        self._items.append(PlannerEvent(iteration, kind, best_cost))
        self._counts[kind] += 1

    def count(self, kind: EventKind) -> int:
        return self._counts[kind]

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def __getitem__(self, i):
        return self._items[i]


@dataclass
class PlannerResult:
    path: Path | None
    events: EventLog
    rng_seed: int
    nodes_added: int
    iterations: int
    capped: bool = False
    forest: Forest | None = None
    extras: dict = field(default_factory=dict)


def _check_endpoints(scenario: Scenario, environment: Environment) -> None:
    envmod.validate_scenario(scenario, environment)


def _steer(from_pos: np.ndarray, target: np.ndarray, epsilon: float):
    vec = target - from_pos
    dist = math.sqrt(float(vec @ vec))
    if dist <= epsilon:
        return target, dist
    return from_pos + (epsilon / dist) * vec, dist


class _SolutionTracker:
    """Monotone best-cost bookkeeping shared by all planners."""

    def __init__(self, events: EventLog):
        self.events = events
        self.best = math.inf

    def offer(self, iteration: int, cost: float) -> None:
        if cost < self.best:
            self.best = cost
            self.events.append(iteration, EventKind.SOLUTION_IMPROVED, cost)


# ---------------------------------------------------------------------------
# RRdT*

def plan_rrdt_star(scenario: Scenario, environment: Environment) -> PlannerResult:
    """Forest of locally exploring disjointed trees scheduled by a mortal
    bandit: restart an expired arm if any, otherwise pull an arm, walk it one
    epsilon-step, and epsilon-join the new sample into the forest."""
    _check_endpoints(scenario, environment)
    seed = scenario.seed
    rng_global = substream(seed, "global")
    rng_arms = substream(seed, "arms")
    eps = scenario.epsilon
    # relative slack so a walker's own node (at distance epsilon up to
    # rounding) can never fall out of its proposal's join ball
    eps_join = eps * (1.0 + 1e-12)
    res = scenario.collision_resolution

    forest = Forest(environment, eps, res, scenario.gamma_rewire)
    forest.insert_root(scenario.start, "root")
    report = forest.join_within_epsilon(scenario.goal, eps_join, environment)
    goal_node = report.node_id if report else forest.insert_root(scenario.goal, "dtree")

    # every walker incarnation gets its own independent stream, spawned in
    # deterministic order (and batches, for speed) from one master sequence
    walker_seeds = np.random.SeedSequence(derive_seed(seed, "walkers"))
    seed_pool: list = []
    walker_rngs: dict[int, np.random.Generator] = {}

    def make_sampler(position, arm_id):
        if not seed_pool:
            seed_pool.extend(reversed(walker_seeds.spawn(64)))
        stream = np.random.Generator(np.random.Philox(seed_pool.pop()))
        walker_rngs[arm_id] = stream
        return ls.make_walker(position, stream, scenario.base_kappa,
                              scenario.failure_relax)

    bcfg = bd.BanditConfig(eta=scenario.eta, decay=scenario.decay,
                           learn_rate=scenario.learn_rate,
                           initial_probability=scenario.initial_probability)
    arms: list[bd.Arm] = []
    for i in range(scenario.num_arms):
        q, _ = envmod.sample_free(environment, rng_global)
        rep = forest.join_within_epsilon(q, eps_join, environment)
        node = rep.node_id if rep else forest.insert_root(q, "dtree")
        arms.append(bd.Arm(id=i, sampler=make_sampler(q, i),
                           probability=scenario.initial_probability, pulls=0,
                           home_tree=forest.tree_of(node)))

    events = EventLog()
    tracker = _SolutionTracker(events)
    tree_creation_iters: list[int] = []
    n_added, it = 0, 0
    cap = scenario.iteration_cap()
    budget = scenario.node_budget
    if forest.in_root_tree(goal_node):
        tracker.offer(0, forest.cost_to_root(goal_node))

    while n_added < budget and it < cap:
        it += 1
        out = bd.restart_arms(arms, forest, environment, bcfg, rng_global,
                              make_sampler=make_sampler)
        if out.added:
            for _ in range(out.rejections):
                events.append(it, EventKind.SAMPLE_IN_OBSTACLE)
            events.append(it, EventKind.NODE_ADDED)
            n_added += 1
            if out.new_tree:
                tree_creation_iters.append(it)
        else:
            arm = bd.pick_arm(arms, rng_arms)
            q_new = ls.propose(arm.sampler, eps, walker_rngs[arm.id])
            pos = arm.sampler.position
            if not environment.point_ok(q_new):
                events.append(it, EventKind.SAMPLE_IN_OBSTACLE)
                ls.report_failure(arm.sampler)
                reward = 0
            elif not environment.seg_ok(pos, q_new, res):
                events.append(it, EventKind.FAILED_CONNECTION)
                ls.report_failure(arm.sampler)
                reward = 0
            else:
                rep = forest.join_within_epsilon(q_new, eps_join, environment)
                assert rep is not None, "walker's own node lies within the join ball"
                events.append(it, EventKind.NODE_ADDED)
                n_added += 1
                if forest.in_root_tree(rep.node_id):
                    forest.rewire(rep.node_id, environment)
                ls.report_success(arm.sampler, q_new)
                arm.home_tree = rep.tree_id
                reward = 1
            bd.apply_reward(arm, reward, bcfg)
        bd.decay_all(arms, bcfg)
        if forest.in_root_tree(goal_node):
            tracker.offer(it, forest.cost_to_root(goal_node))

    path = forest.extract_path(goal_node) if forest.in_root_tree(goal_node) else None
    return PlannerResult(path=path, events=events, rng_seed=seed,
                         nodes_added=n_added, iterations=it,
                         capped=it >= cap and n_added < budget, forest=forest,
                         extras={"arms": arms,
                                 "tree_creation_iterations": tree_creation_iters,
                                 "trees_created": forest.trees_created})


# ---------------------------------------------------------------------------
# RRT* and Informed RRT*

class _EllipsoidSampler:
    """Uniform sampling of the prolate hyperspheroid
    {x : |x - start| + |x - goal| <= c_best} via unit-ball scaling."""

    def __init__(self, start: np.ndarray, goal: np.ndarray):
        self.center = 0.5 * (start + goal)
        self.c_min = float(np.linalg.norm(goal - start))
        d = len(start)
        a1 = (goal - start) / self.c_min
        e1 = np.zeros(d)
        e1[0] = 1.0
        u, _, vt = np.linalg.svd(np.outer(a1, e1))
        flip = np.ones(d)
        flip[-1] = np.linalg.det(u) * np.linalg.det(vt)
        self.rotation = (u * flip) @ vt

    def sample_in_bounds(self, rng, c_best: float, lower, upper) -> np.ndarray:
        """Uniform over the hyperspheroid, redrawing (uncounted) any point
        that leaves the world bounds: such points lie outside C entirely."""
        d = len(self.center)
        r = np.full(d, 0.5 * math.sqrt(max(c_best * c_best - self.c_min * self.c_min, 0.0)))
        r[0] = 0.5 * c_best
        batch = 16
        for _ in range(SAMPLE_REJECTION_CAP // batch):
            v = rng.standard_normal((batch, d))
            norms = np.sqrt((v * v).sum(axis=1))
            norms[norms < 1e-12] = np.inf
            radius = rng.random(batch) ** (1.0 / d)
            pts = self.center + ((radius / norms)[:, None] * v * r) @ self.rotation.T
            ok = (pts >= lower).all(axis=1) & (pts < upper).all(axis=1)
            hit = int(np.argmax(ok)) if ok.any() else -1
            if hit >= 0:
                return np.ascontiguousarray(pts[hit])
        raise RuntimeError("ellipsoid sampling cannot reach the world bounds")


def _rrt_like(scenario: Scenario, environment: Environment, informed: bool) -> PlannerResult:
    _check_endpoints(scenario, environment)
    seed = scenario.seed
    rng = substream(seed, "global")
    eps = scenario.epsilon
    res = scenario.collision_resolution
    start, goal = scenario.start, scenario.goal

    forest = Forest(environment, eps, res, scenario.gamma_rewire)
    root = forest.insert_root(start, "root")
    goal_node = root if np.array_equal(start, goal) else None
    ellipsoid = None

    events = EventLog()
    tracker = _SolutionTracker(events)
    n_added, it = 0, 0
    cap = scenario.iteration_cap()
    budget = scenario.node_budget
    if goal_node is not None:
        tracker.offer(0, 0.0)

    while n_added < budget and it < cap:
        it += 1
        if informed and goal_node is not None and tracker.best > 0:
            if ellipsoid is None:
                ellipsoid = _EllipsoidSampler(start, goal)
            q_rand = ellipsoid.sample_in_bounds(rng, tracker.best,
                                                environment.lower, environment.upper)
        elif goal_node is None and rng.uniform() < scenario.goal_bias:
            q_rand = goal
        else:
            q_rand = rng.uniform(environment.lower, environment.upper)
        if not environment.point_ok(q_rand):
            events.append(it, EventKind.SAMPLE_IN_OBSTACLE)
            continue
        near = forest.nearest(q_rand)
        q_new, dist = _steer(forest.config(near), q_rand, eps)
        if dist == 0.0 or not environment.seg_ok(forest.config(near), q_new, res):
            events.append(it, EventKind.FAILED_CONNECTION)
            continue
        node = forest.attach(near, q_new)
        forest.rewire(node, environment)
        events.append(it, EventKind.NODE_ADDED)
        n_added += 1
        if goal_node is None and np.array_equal(q_new, goal):
            goal_node = node
        if goal_node is not None:
            tracker.offer(it, forest.cost_to_root(goal_node))

    path = forest.extract_path(goal_node) if goal_node is not None else None
    return PlannerResult(path=path, events=events, rng_seed=seed,
                         nodes_added=n_added, iterations=it,
                         capped=it >= cap and n_added < budget, forest=forest)


def plan_rrt_star(scenario: Scenario, environment: Environment) -> PlannerResult:
    """Canonical RRT*: uniform sampling with goal bias, steer-by-epsilon from
    the nearest node, choose-parent + rewire in the shrinking ball."""
    return _rrt_like(scenario, environment, informed=False)


def plan_informed_rrt_star(scenario: Scenario, environment: Environment) -> PlannerResult:
    """RRT* until the first solution, then uniform sampling restricted to the
    prolate hyperspheroid spanned by start, goal, and the best cost."""
    return _rrt_like(scenario, environment, informed=True)


# ---------------------------------------------------------------------------
# Bi-RRT*

class _SideIndex:
    """Fast per-tree nearest lookups for the pre-connection phase."""

    def __init__(self, dim: int):
        self._pi = PointIndex(dim)
        self._ids: list[int] = []

    def add(self, node_id: int, q) -> None:
        self._pi.add(np.asarray(q, dtype=np.float64))
        self._ids.append(node_id)

    def nearest(self, q) -> int:
        return self._ids[self._pi.nearest(q)]


def _try_bridge(forest: Forest, environment: Environment, node: int,
                q: np.ndarray, eps: float, res: float) -> bool:
    """Merge the trees if any reachable node of the other tree lies within
    one epsilon hop of the newly added node."""
    ids = forest.within_radius(q, eps)
    own = forest.tree_of(node)
    others = [int(i) for i in ids if forest.tree_of(int(i)) != own]
    if not others:
        return False
    pts = forest.configs
    d2 = kernels.rows_d2(pts[others], q)
    for k in np.argsort(d2, kind="stable"):
        nbr = others[int(k)]
        if environment.seg_ok(pts[nbr], q, res):
            forest.merge_trees(forest.tree_of(node), forest.tree_of(nbr), (node, nbr))
            return True
    return False


def plan_birrt_star(scenario: Scenario, environment: Environment) -> PlannerResult:
    """Trees from both endpoints grown alternately with a connect heuristic
    (each new frontier node pulls one epsilon step from the other tree); once
    connected the goal tree folds into the start tree and rewiring proceeds
    on the unified tree."""
    _check_endpoints(scenario, environment)
    seed = scenario.seed
    rng = substream(seed, "global")
    eps = scenario.epsilon
    res = scenario.collision_resolution
    start, goal = scenario.start, scenario.goal

    forest = Forest(environment, eps, res, scenario.gamma_rewire)
    root = forest.insert_root(start, "root")
    events = EventLog()
    tracker = _SolutionTracker(events)
    merged = False
    if np.array_equal(start, goal):
        goal_node = root
        merged = True
    elif (float(np.linalg.norm(goal - start)) <= eps
          and envmod.segment_free(environment, start, goal, res)):
        goal_node = forest.attach(root, goal)
        merged = True
    else:
        goal_node = forest.insert_root(goal, "dtree")
    if merged:
        tracker.offer(0, forest.cost_to_root(goal_node))
    sides = None
    if not merged:
        sides = (_SideIndex(environment.dimension), _SideIndex(environment.dimension))
        sides[0].add(root, start)
        sides[1].add(goal_node, goal)

    n_added, it = 0, 0
    cap = scenario.iteration_cap()
    budget = scenario.node_budget

    while n_added < budget and it < cap:
        it += 1
        q_rand = rng.uniform(environment.lower, environment.upper)
        if not environment.point_ok(q_rand):
            events.append(it, EventKind.SAMPLE_IN_OBSTACLE)
            continue
        if merged:
            near = forest.nearest(q_rand)
        else:
            grow = (it + 1) % 2  # 0 = root side on odd iterations
            near = sides[grow].nearest(q_rand)
        q_new, dist = _steer(forest.config(near), q_rand, eps)
        if dist == 0.0 or not environment.seg_ok(forest.config(near), q_new, res):
            events.append(it, EventKind.FAILED_CONNECTION)
            continue
        node = forest.attach(near, q_new)
        events.append(it, EventKind.NODE_ADDED)
        n_added += 1
        if merged:
            forest.rewire(node, environment)
        else:
            sides[grow].add(node, q_new)
            # connect heuristic: the trees join the moment a frontier node
            # can reach the other tree within one epsilon hop
            merged = _try_bridge(forest, environment, node, q_new, eps, res)
            if merged:
                forest.rewire(node, environment)
        if merged:
            tracker.offer(it, forest.cost_to_root(goal_node))

    path = forest.extract_path(goal_node) if merged else None
    return PlannerResult(path=path, events=events, rng_seed=seed,
                         nodes_added=n_added, iterations=it,
                         capped=it >= cap and n_added < budget, forest=forest)


# ---------------------------------------------------------------------------
# PRM*

class _EdgeStore:
    """Growable parallel arrays for the undirected roadmap edges."""

    def __init__(self):
        self._u = np.empty(256, dtype=np.int64)
        self._v = np.empty(256, dtype=np.int64)
        self._w = np.empty(256, dtype=np.float64)
        self._n = 0

    def __len__(self):
        return self._n

    def add(self, u: int, v: int, w: float):
        if self._n == len(self._u):
            self._u = np.concatenate([self._u, np.empty_like(self._u)])
            self._v = np.concatenate([self._v, np.empty_like(self._v)])
            self._w = np.concatenate([self._w, np.empty_like(self._w)])
        self._u[self._n] = u
        self._v[self._n] = v
        self._w[self._n] = w
        self._n += 1

    def views(self):
        return self._u[:self._n], self._v[:self._n], self._w[:self._n]


def _roadmap_shortest_path(n_vertices: int, edges_u, edges_v, edges_w):
    """Dijkstra from vertex 0 over the undirected weighted roadmap."""
    graph = csr_matrix((edges_w, (edges_u, edges_v)), shape=(n_vertices, n_vertices))
    dist, pred = _csgraph_dijkstra(graph, directed=False, indices=0,
                                   return_predecessors=True)
    return dist, pred


def plan_prm_star(scenario: Scenario, environment: Environment) -> PlannerResult:
    """PRM*: N free samples connected inside the shrinking radius; a Dijkstra
    query from start to goal runs after every 250 added samples."""
    _check_endpoints(scenario, environment)
    seed = scenario.seed
    rng = substream(seed, "global")
    res = scenario.collision_resolution
    d = environment.dimension
    gamma = scenario.gamma_rewire if scenario.gamma_rewire is not None \
        else default_gamma(environment)

    index = PointIndex(d)
    index.add(scenario.start)
    index.add(scenario.goal)
    edges = _EdgeStore()

    events = EventLog()
    tracker = _SolutionTracker(events)
    best_path_ids: list[int] | None = None
    if np.array_equal(scenario.start, scenario.goal):
        best_path_ids = [0, 1]
        tracker.offer(0, 0.0)
    n_added, it = 0, 0
    budget = scenario.node_budget

    while n_added < budget:
        it += 1
        q, rejections = envmod.sample_free(environment, rng)
        for _ in range(rejections):
            events.append(it, EventKind.SAMPLE_IN_OBSTACLE)
        new = index.add(q)
        n = new + 1
        radius = gamma * (math.log(n) / n) ** (1.0 / d)
        nbrs = index.within_radius(q, radius)
        if len(nbrs):
            pts = index.points[nbrs]
            ok = environment.segs_ok(pts, q, res)
            dists = np.sqrt(kernels.rows_d2(pts, q))
            for j in np.nonzero(ok)[0]:
                nbr = int(nbrs[j])
                if nbr != new:
                    edges.add(nbr, new, float(dists[int(j)]))
        events.append(it, EventKind.NODE_ADDED)
        n_added += 1
        if n_added % 250 == 0 and len(edges):
            dist, pred = _roadmap_shortest_path(len(index), *edges.views())
            if math.isfinite(dist[1]) and dist[1] < tracker.best:
                ids = [1]
                while ids[-1] != 0:
                    ids.append(int(pred[ids[-1]]))
                ids.reverse()
                best_path_ids = ids
                tracker.offer(it, float(dist[1]))

    path = None
    if best_path_ids is not None:
        path = Path(waypoints=index.points[best_path_ids].copy(), cost=tracker.best)
    eu, ev, ew = edges.views()
    return PlannerResult(path=path, events=events, rng_seed=seed,
                         nodes_added=n_added, iterations=it, forest=None,
                         extras={"roadmap_size": len(index),
                                 "roadmap_edges": len(edges),
                                 "roadmap": (index.points.copy(),
                                             (eu.copy(), ev.copy(), ew.copy()))})


PLANNERS = {
    "rrdt": plan_rrdt_star,
    "rrt": plan_rrt_star,
    "birrt": plan_birrt_star,
    "informed_rrt": plan_informed_rrt_star,
    "prm": plan_prm_star,
}


def plan(scenario: Scenario, environment: Environment,
         planner: str | None = None) -> PlannerResult:
    name = planner or scenario.planner
    if name not in PLANNERS:
        raise ScenarioError(f"unknown planner {name!r}; expected one of "
                            f"{', '.join(sorted(PLANNERS))}")
    return PLANNERS[name](scenario, environment)
