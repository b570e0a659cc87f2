"""Forest of disjointed trees: node store, union-find tree membership,
exact nearest-neighbor index, epsilon-joins, merges with re-rooting,
shrinking-ball rewiring, and path extraction.

Node ids are dense integers in insertion order; a tree's canonical id is the
node id of its structural root (the root tree keeps canonical id 0 forever).
All ties anywhere break toward the lowest node id so reruns are bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import env as envmod
from . import kernels


class ForestError(ValueError):
    pass


@dataclass
class Path:
    waypoints: np.ndarray  # (k, d), q_init first
    cost: float


@dataclass
class JoinReport:
    node_id: int
    parent_id: int
    joined_trees: tuple[int, ...]  # canonical ids holding reachable neighbors (pre-merge)
    tree_id: int                   # canonical id of the merged tree


class PointIndex:
    """Exact NN index: bulk-rebuilt kd-tree plus a linear side buffer.

    Rebuild triggers when the buffer outgrows max(64, 25% of the indexed
    size); queries scan both parts so results are always exact. The kd-tree
    and the buffer scans come from the kernels package (compiled when
    available).
    """

    def __init__(self, dim: int):
        self._dim = dim
        self._pts = np.empty((64, dim), dtype=np.float64)
        self._n = 0
        self._kd = None
        self._kd_n = 0

    def __len__(self) -> int:
        return self._n

    @property
    def points(self) -> np.ndarray:
        return self._pts[:self._n]

    def add(self, p: np.ndarray) -> int:
        if self._n == len(self._pts):
            grown = np.empty((2 * len(self._pts), self._dim), dtype=np.float64)
            grown[:self._n] = self._pts[:self._n]
            self._pts = grown
        self._pts[self._n] = p
        self._n += 1
        if self._n - self._kd_n > max(64, self._kd_n // 4):
            self._kd = kernels.KDIndex(self._pts[:self._n])
            self._kd_n = self._n
        return self._n - 1

    def nearest(self, q: np.ndarray) -> int:
        """Lowest-id nearest node (squared-distance comparison, exact)."""
        return self.nearest_d2(q)[1]

    def within_radius(self, q: np.ndarray, r: float) -> np.ndarray:
        """Node ids with Euclidean distance <= r (closed ball), ascending."""
        parts = []
        if self._kd_n:
            hits = self._kd.ball(q, r)
            if len(hits):
                parts.append(hits)
        if self._n > self._kd_n:
            hits = kernels.brute_ball(self._pts[self._kd_n:self._n], q, r * r)
            if len(hits):
                parts.append(hits + self._kd_n)
        if not parts:
            return np.empty(0, dtype=np.int64)
        if len(parts) == 1:
            return parts[0]
        return np.concatenate(parts)

    def nearest_where(self, q: np.ndarray, member_mask_fn) -> int:
        """Nearest id among those selected by a vectorized membership mask
        (ties to the lowest id), found by growing closed-ball sweeps."""
        if self._n == 0:
            raise ForestError("nearest_where() on an empty index")
        d2, i = self.nearest_d2(q)
        r = math.sqrt(d2)
        if r == 0.0:
            r = 1e-9
        span = float(np.linalg.norm(self._pts[:self._n].max(axis=0)
                                    - self._pts[:self._n].min(axis=0))) + r
        while True:
            ids = self.within_radius(q, r)
            if len(ids):
                mask = member_mask_fn(ids)
                if mask.any():
                    ids = ids[mask]
                    dist2 = kernels.rows_d2(self._pts[ids], q)
                    return int(ids[dist2 == dist2.min()].min())
            if r > span:
                raise ForestError("no index member satisfies the filter")
            r *= 2.0

    def nearest_d2(self, q: np.ndarray):
        if self._n == 0:
            raise ForestError("nearest() on an empty index")
        best = (math.inf, self._n)
        if self._kd_n:
            best = self._kd.nearest(q)
        if self._n > self._kd_n:
            d2, off = kernels.brute_nearest(self._pts[self._kd_n:self._n], q)
            cand = (d2, off + self._kd_n)
            if cand < best:
                best = cand
        return float(best[0]), int(best[1])


def _unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def default_gamma(environment: envmod.Environment) -> float:
    """Standard admissible rewiring constant from the free-volume estimate."""
    d = environment.dimension
    mu = max(environment.free_volume, np.finfo(float).tiny)
    return 2.0 * (1.0 + 1.0 / d) ** (1.0 / d) * (mu / _unit_ball_volume(d)) ** (1.0 / d)


class Forest:
    """All trees of one planner run over a fixed environment."""

    def __init__(self, environment: envmod.Environment, epsilon: float,
                 resolution: float, gamma_rewire: float | None = None):
        self.env = environment
        self.epsilon = float(epsilon)
        self.resolution = float(resolution)
        self.gamma_rewire = float(gamma_rewire) if gamma_rewire is not None \
            else default_gamma(environment)
        self._index = PointIndex(environment.dimension)
        self._n = 0
        cap = 64
        self._parent = np.empty(cap, dtype=np.int64)
        self._edge = np.empty(cap, dtype=np.float64)  # parent-edge length (0 at a tree root)
        self._cost = np.empty(cap, dtype=np.float64)
        self._first_child = np.empty(cap, dtype=np.int64)
        self._next_sib = np.empty(cap, dtype=np.int64)
        self._uf = np.empty(cap, dtype=np.int64)
        self._uf_size = np.empty(cap, dtype=np.int64)
        self._canon = np.empty(cap, dtype=np.int64)
        self.root_tree_id: int | None = None
        self.trees_created = 0
        self.dtree_creation_nn: list[float] = []

    # -- basic accessors ----------------------------------------------------

    def __len__(self) -> int:
        return self._n

    def config(self, node: int) -> np.ndarray:
        return self._index.points[node]

    @property
    def configs(self) -> np.ndarray:
        return self._index.points

    def parent(self, node: int) -> int | None:
        p = int(self._parent[node])
        return None if p < 0 else p

    def cost_to_root(self, node: int) -> float:
        return float(self._cost[node])

    def children(self, node: int) -> list[int]:
        out = []
        c = int(self._first_child[node])
        while c >= 0:
            out.append(c)
            c = int(self._next_sib[c])
        return out

    def _link_child(self, parent: int, child: int) -> None:
        self._next_sib[child] = self._first_child[parent]
        self._first_child[parent] = child

    def _unlink_child(self, parent: int, child: int) -> None:
        cur = int(self._first_child[parent])
        if cur == child:
            self._first_child[parent] = self._next_sib[child]
            return
        while cur >= 0:
            nxt = int(self._next_sib[cur])
            if nxt == child:
                self._next_sib[cur] = self._next_sib[child]
                return
            cur = nxt
        raise ForestError("child link not found")

    def _find(self, x: int) -> int:
        uf = self._uf
        while uf[x] != x:
            uf[x] = uf[uf[x]]
            x = uf[x]
        return int(x)

    def tree_of(self, node: int) -> int:
        return int(self._canon[self._find(node)])

    def tree_of_many(self, ids: np.ndarray) -> np.ndarray:
        """Vectorized canonical tree ids (path-halving on the whole batch)."""
        uf = self._uf
        cur = np.asarray(ids, dtype=np.int64)
        while True:
            par = uf[cur]
            settled = par == cur
            if settled.all():
                return self._canon[cur]
            uf[cur] = uf[par]
            cur = np.where(settled, cur, par)

    def in_root_tree(self, node: int) -> bool:
        return self.root_tree_id is not None and self.tree_of(node) == self.root_tree_id

    def tree_size(self, tree_id: int) -> int:
        return int(self._uf_size[self._find(tree_id)])

    def root_tree_size(self) -> int:
        return 0 if self.root_tree_id is None else self.tree_size(self.root_tree_id)

    def nearest(self, q) -> int:
        return self._index.nearest(np.asarray(q, dtype=np.float64))

    def within_radius(self, q, r: float) -> np.ndarray:
        return self._index.within_radius(np.asarray(q, dtype=np.float64), float(r))

    def nearest_in_tree(self, q, tree_id: int) -> int:
        q = np.asarray(q, dtype=np.float64)
        return self._index.nearest_where(q, lambda ids: self.tree_of_many(ids) == tree_id)

    # -- construction -------------------------------------------------------

    def _new_node(self, q: np.ndarray, parent: int, edge: float, cost: float) -> int:
        node = self._index.add(q)
        if node == len(self._uf):
            for name in ("_parent", "_edge", "_cost", "_first_child",
                         "_next_sib", "_uf", "_uf_size", "_canon"):
                arr = getattr(self, name)
                setattr(self, name, np.concatenate([arr, np.empty_like(arr)]))
        self._n = node + 1
        self._parent[node] = parent
        self._edge[node] = edge
        self._cost[node] = cost
        self._first_child[node] = -1
        self._next_sib[node] = -1
        self._uf[node] = node
        self._uf_size[node] = 1
        self._canon[node] = node
        if parent >= 0:
            self._link_child(parent, node)
            root = self._find(parent)
            self._uf[node] = root
            self._uf_size[root] += 1
        return node

    def insert_root(self, q, tree_kind: str) -> int:
        """Create a singleton tree ('root' once, at q_init; 'dtree' otherwise)."""
        if tree_kind not in ("root", "dtree"):
            raise ForestError(f"tree_kind must be 'root' or 'dtree', got {tree_kind!r}")
        q = envmod.as_config(q, self.env.dimension)
        if not envmod.is_free(self.env, q):
            raise ForestError("tree root must be in free space")
        if tree_kind == "root":
            if len(self):
                raise ForestError("the root tree must be created first, on an empty forest")
            node = self._new_node(q, -1, 0.0, 0.0)
            self.root_tree_id = node
        else:
            if len(self):
                nd = self.config(self.nearest(q)) - q
                self.dtree_creation_nn.append(math.sqrt(float(nd @ nd)))
            node = self._new_node(q, -1, 0.0, math.inf)
        self.trees_created += 1
        return node

    def attach(self, parent_id: int, q) -> int:
        """Add q as a child of an existing node (caller validated the edge)."""
        q = envmod.as_config(q, self.env.dimension)
        diff = self.config(parent_id) - q
        edge = math.sqrt(float(diff @ diff))
        cost = self._cost[parent_id] + edge if self.in_root_tree(parent_id) else math.inf
        return self._new_node(q, parent_id, edge, cost)

    # -- joins and merges ---------------------------------------------------

    def join_within_epsilon(self, q, epsilon: float, environment=None) -> JoinReport | None:
        """Insert q joined to every tree owning a reachable node within
        epsilon; returns None (and inserts nothing) when no node qualifies.

        Parent rule: cost-aware among root-tree neighbors if any is reachable,
        otherwise the nearest reachable neighbor.
        """
        environment = environment or self.env
        q = envmod.as_config(q, environment.dimension)
        ids = self.within_radius(q, epsilon)
        if len(ids) == 0:
            return None
        pts = self._index.points
        if len(ids) == 1:
            # single candidate (the common walker-chain extension)
            if not environment.seg_ok(pts[int(ids[0])], q, self.resolution):
                return None
            reachable = [int(ids[0])]
        else:
            mask = environment.segs_ok(pts[ids], q, self.resolution)
            if not mask.any():
                return None
            reachable = [int(i) for i in ids[mask]]
        dists = np.sqrt(kernels.rows_d2(pts[reachable], q))
        canon = self.tree_of_many(np.asarray(reachable, dtype=np.int64))
        root_members = np.nonzero(canon == self.root_tree_id)[0] \
            if self.root_tree_id is not None else np.empty(0, dtype=np.int64)
        if len(root_members):
            through = [(self._cost[reachable[k]] + float(dists[k]), reachable[k], k)
                       for k in root_members]
            _, parent, k_best = min(through)
            edge = float(dists[k_best])
            cost = self._cost[parent] + edge
        else:
            order = np.lexsort((np.asarray(reachable), dists))
            k_best = int(order[0])
            parent = reachable[k_best]
            edge = float(dists[k_best])
            cost = math.inf
        joined = tuple(sorted(set(int(c) for c in canon)))
        node = self._new_node(q, parent, edge, cost)
        for k, nbr in enumerate(reachable):
            if self._find(nbr) != self._find(node):
                self.merge_trees(self.tree_of(node), self.tree_of(nbr), (node, nbr))
        return JoinReport(node_id=node, parent_id=parent, joined_trees=joined,
                          tree_id=self.tree_of(node))

    def merge_trees(self, tree_a: int, tree_b: int, bridge: tuple[int, int]) -> int:
        """Fold two trees into one across a validated bridge edge.

        The root tree always survives; otherwise the larger tree keeps its
        parent structure and the smaller is re-rooted onto it.
        """
        ra, rb = self._find(tree_a), self._find(tree_b)
        if ra == rb:
            raise ForestError("cannot merge a tree with itself")
        na, nb = bridge
        if self._find(na) != ra or self._find(nb) != rb:
            raise ForestError("bridge endpoints must lie in the named trees")
        keep_a = (self._canon[ra] == self.root_tree_id
                  or (self._canon[rb] != self.root_tree_id
                      and (self._uf_size[ra], -self._canon[ra])
                      >= (self._uf_size[rb], -self._canon[rb])))
        keep_node, absorb_node = (na, nb) if keep_a else (nb, na)
        keep_root = ra if keep_a else rb
        absorb_root = rb if keep_a else ra
        keep_canon = int(self._canon[keep_root])

        self._reroot(absorb_node)
        diff = self.config(keep_node) - self.config(absorb_node)
        self._parent[absorb_node] = keep_node
        self._edge[absorb_node] = math.sqrt(float(diff @ diff))
        self._link_child(keep_node, absorb_node)

        # union-find: attach by size, canonical follows the keep side
        if self._uf_size[keep_root] >= self._uf_size[absorb_root]:
            big, small = keep_root, absorb_root
        else:
            big, small = absorb_root, keep_root
        self._uf[small] = big
        self._uf_size[big] += self._uf_size[small]
        self._canon[big] = keep_canon

        if keep_canon == self.root_tree_id:
            self._cost[absorb_node] = self._cost[keep_node] + self._edge[absorb_node]
            self._propagate_costs(absorb_node)
        return keep_canon

    def _reroot(self, node: int) -> None:
        path = [node]
        while self._parent[path[-1]] >= 0:
            path.append(int(self._parent[path[-1]]))
        lens = [float(self._edge[v]) for v in path]
        # detach the whole path first: _link_child reuses the next-sibling
        # slot, so a node must never be linked while still in another list
        for k in range(len(path) - 1):
            self._unlink_child(path[k + 1], path[k])
        for k in range(len(path) - 1):
            child, par = path[k], path[k + 1]
            self._parent[par] = child
            self._edge[par] = lens[k]
            self._link_child(child, par)
        self._parent[node] = -1
        self._edge[node] = 0.0

    def _propagate_costs(self, start: int) -> None:
        kernels.propagate_costs(self._cost, self._edge, self._first_child,
                                self._next_sib, start)

    # -- rewiring -----------------------------------------------------------

    def rewire_radius(self, radius_constant: float | None = None) -> float:
        n = self.root_tree_size()
        if n <= 1:
            return 0.0
        gamma = self.gamma_rewire if radius_constant is None else radius_constant
        d = self.env.dimension
        return min(self.epsilon, gamma * (math.log(n) / n) ** (1.0 / d))

    def rewire(self, new_node: int, environment=None, radius_constant: float | None = None) -> int:
        """Two-phase shrinking-ball rewiring around a root-tree node.

        Phase 1 re-parents new_node onto the neighbor minimizing cost-through;
        phase 2 re-parents any neighbor whose cost drops through new_node,
        propagating costs down affected subtrees. Returns the number of
        neighbors re-parented in phase 2.
        """
        environment = environment or self.env
        if not self.in_root_tree(new_node):
            raise ForestError("rewire requires a root-tree node")
        r = self.rewire_radius(radius_constant)
        if r <= 0.0:
            return 0
        q = self.config(new_node)
        ids = self.within_radius(q, r)
        if len(ids) == 0:
            return 0
        mask = (self.tree_of_many(ids) == self.root_tree_id) & (ids != new_node)
        nbrs = ids[mask]
        if len(nbrs) == 0:
            return 0
        dists = np.sqrt(kernels.rows_d2(self._index.points[nbrs], q))
        res = self.resolution
        cost = self._cost

        # phase 1: choose-parent
        order = sorted(range(len(nbrs)),
                       key=lambda k: (cost[nbrs[k]] + dists[k], nbrs[k]))
        cur_parent = int(self._parent[new_node])
        for k in order:
            cand = int(nbrs[k])
            through = cost[cand] + float(dists[k])
            if through >= cost[new_node]:
                break
            if cand == cur_parent:
                continue
            if environment.seg_ok(self.config(cand), q, res):
                if cur_parent >= 0:
                    self._unlink_child(cur_parent, new_node)
                self._parent[new_node] = cand
                self._edge[new_node] = float(dists[k])
                self._link_child(cand, new_node)
                cost[new_node] = through
                self._propagate_costs(new_node)
                break

        # phase 2: re-parent neighbors through new_node
        count = 0
        base = float(cost[new_node])
        cur_parent = int(self._parent[new_node])
        pts = self._index.points
        for k in range(len(nbrs)):
            nbr = int(nbrs[k])
            if nbr == cur_parent:
                continue
            through = base + float(dists[k])
            if through < cost[nbr] and environment.seg_ok(q, pts[nbr], res):
                old = int(self._parent[nbr])
                if old >= 0:
                    self._unlink_child(old, nbr)
                self._parent[nbr] = new_node
                self._edge[nbr] = float(dists[k])
                self._link_child(new_node, nbr)
                cost[nbr] = through
                self._propagate_costs(nbr)
                count += 1
        return count

    # -- readout ------------------------------------------------------------

    def extract_path(self, goal_node: int) -> Path:
        if not self.in_root_tree(goal_node):
            raise ForestError("goal node is not in the root tree")
        chain = [goal_node]
        while self._parent[chain[-1]] >= 0:
            chain.append(int(self._parent[chain[-1]]))
        chain.reverse()
        return Path(waypoints=self.configs[chain].copy(), cost=float(self._cost[goal_node]))

    def dump_graph(self) -> str:
        """One line per node: `node <id> <coords...> parent=<id|-> cost=<v> tree=<id>`."""
        lines = []
        for i in range(len(self)):
            coords = " ".join(repr(float(c)) for c in self.config(i))
            par = int(self._parent[i])
            lines.append(f"node {i} {coords} parent={par if par >= 0 else '-'} "
                         f"cost={float(self._cost[i])!r} tree={self.tree_of(i)}")
        return "\n".join(lines) + ("\n" if lines else "")
