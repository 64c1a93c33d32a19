"""Symmetry breaking: adapted Luby cover steps, ruling sets, weighted covers.

All randomness is drawn from seeded generators keyed by (phase, iteration),
with per-node decisions taken from vectorized draws in node-id order, so
results are reproducible regardless of execution order. Graph powers G^t
are never materialized globally; they are probed by bounded BFS, mirroring
how a memory-constrained implementation would sample them.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import AccountingError, InputError
from .runtime import CHARGE_HOP, Runtime

LUBY_MARK_C = 4.0


@dataclass
class UnweightedGraphView:
    adjacency: list            # node id -> np.ndarray of neighbor ids
    weights: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.adjacency)

    def degrees(self) -> np.ndarray:
        return np.array([len(a) for a in self.adjacency], dtype=np.int64)


def view_from_edges(n: int, edges_u, edges_v, weights=None) -> UnweightedGraphView:
    adj = [[] for _ in range(n)]
    for u, v in zip(edges_u, edges_v):
        adj[int(u)].append(int(v))
        adj[int(v)].append(int(u))
    adj = [np.array(sorted(set(a)), dtype=np.int64) for a in adj]
    return UnweightedGraphView(adj, weights)


def bfs_hops(view: UnweightedGraphView, sources, max_depth=None) -> np.ndarray:
    """Hop distances from a source set; unreached nodes get -1."""
    dist = np.full(view.n, -1, dtype=np.int64)
    dq = deque()
    for s in sources:
        if dist[s] < 0:
            dist[s] = 0
            dq.append(int(s))
    while dq:
        u = dq.popleft()
        if max_depth is not None and dist[u] >= max_depth:
            continue
        for v in view.adjacency[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                dq.append(int(v))
    return dist


def power_neighbors(view: UnweightedGraphView, node: int, t: int,
                    restrict: np.ndarray | None = None):
    """Nodes within t hops of `node` (exclusive), optionally mask-filtered."""
    dist = np.full(view.n, -1, dtype=np.int64)
    dist[node] = 0
    dq = deque([node])
    out = []
    while dq:
        u = dq.popleft()
        if dist[u] >= t:
            continue
        for v in view.adjacency[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                if restrict is None or restrict[v]:
                    out.append(int(v))
                dq.append(int(v))
    return out


def luby_cover_step(view: UnweightedGraphView, d_hat: np.ndarray, seed,
                    alive: np.ndarray | None = None) -> np.ndarray:
    """One adapted Luby marking: include v with probability ~ c*log(n)/d_hat(v).

    d_hat must satisfy deg <= d_hat <= 2*deg (degrees clamped to >= 1 for
    isolated nodes). Returns the marked id array.
    """
    n = view.n
    d_hat = np.asarray(d_hat, dtype=np.float64)
    deg = view.degrees().astype(np.float64)
    if alive is not None:
        # degrees within the alive subgraph
        deg = np.array([
            int(np.count_nonzero(alive[view.adjacency[u]])) if alive[u] else 0
            for u in range(n)], dtype=np.float64)
    deg_eff = np.maximum(deg, 1.0)
    check = alive if alive is not None else np.ones(n, dtype=bool)
    bad = check & ((d_hat < deg_eff - 1e-9) | (d_hat > 2.0 * deg_eff + 1e-9))
    if np.any(bad):
        u = int(np.flatnonzero(bad)[0])
        raise InputError(
            f"degree estimate out of bounds at node {u}: "
            f"deg={deg_eff[u]}, d_hat={d_hat[u]}")
    p = np.minimum(1.0, LUBY_MARK_C * max(math.log(max(n, 2)), 1.0) / d_hat)
    rng = np.random.default_rng(np.random.SeedSequence(_as_entropy(seed)))
    marked = (rng.random(n) < p) & check
    return np.flatnonzero(marked)


def mis(view: UnweightedGraphView, seed, alive: np.ndarray | None = None):
    """Maximal independent set by iterated random priorities.

    Returns (sorted id array, iterations). Each iteration admits nodes
    whose priority beats every alive neighbor, then removes them and their
    neighbors; ties cannot occur (distinct uniform draws tie-break by id).
    """
    n = view.n
    alive = np.ones(n, dtype=bool) if alive is None else alive.copy()
    chosen = np.zeros(n, dtype=bool)
    iterations = 0
    rng = np.random.default_rng(np.random.SeedSequence(_as_entropy(seed)))
    while np.any(alive):
        iterations += 1
        prio = rng.random(n)
        for u in np.flatnonzero(alive):
            pu = (prio[u], u)
            best = True
            for v in view.adjacency[u]:
                if alive[v] and (prio[v], v) < pu:
                    best = False
                    break
            if best:
                chosen[u] = True
        for u in np.flatnonzero(chosen & alive):
            alive[u] = False
            alive[view.adjacency[u]] = False
    return np.flatnonzero(chosen), iterations


@dataclass
class RulingSetResult:
    members: np.ndarray
    b_out: int                  # coverage radius in G^t hops
    phases: int
    residual_degrees: list = field(default_factory=list)


def _induced_power_graph(view, members, t, runtime=None) -> UnweightedGraphView:
    """Explicit G^t[members] as a view over original node ids.

    Built from bounded BFS per member (a min-l neighborhood collection);
    errors out if a member would have to hold more member ids than a
    machine can store.
    """
    mask = np.zeros(view.n, dtype=bool)
    mask[members] = True
    cap = runtime.config.min_l_bound if runtime is not None else None
    adj = [np.empty(0, dtype=np.int64)] * view.n
    for u in members:
        ids = power_neighbors(view, int(u), t, restrict=mask)
        if cap is not None and len(ids) > max(cap, 64):
            raise AccountingError(
                f"sampled power-graph neighborhood of node {int(u)} holds "
                f"{len(ids)} member ids, over the machine bound")
        adj[int(u)] = np.array(sorted(set(ids)), dtype=np.int64)
    if runtime is not None:
        runtime.ledger.charge("ruling_collect", t * CHARGE_HOP)
    return UnweightedGraphView(adj)


def _inner_covering(sub: UnweightedGraphView, members, iters, seed):
    """(2,2)-style ruling set on an explicit small graph.

    `iters` Luby rounds (marked set thinned to an independent set by a
    greedy id-order pass, 2-hop removal), then forced greedy completion of
    the residual. Returns member ids chosen.
    """
    alive = np.zeros(sub.n, dtype=bool)
    alive[members] = True
    chosen = []
    for it in range(iters):
        if not np.any(alive):
            break
        deg = np.array([
            int(np.count_nonzero(alive[sub.adjacency[u]])) if alive[u] else 0
            for u in range(sub.n)], dtype=np.float64)
        d_hat = np.maximum(deg, 1.0)
        marked = luby_cover_step(sub, d_hat, (seed, "luby", it), alive=alive)
        indep = []
        taken = set()
        for u in sorted(int(x) for x in marked):
            if any(v in taken for v in sub.adjacency[u] if alive[v]):
                continue
            indep.append(u)
            taken.add(u)
        if not indep:
            continue
        chosen.extend(indep)
        # remove 2-hop neighborhoods of the newly chosen nodes
        front = set(indep)
        for _ in range(2):
            nxt = set()
            for u in front:
                for v in sub.adjacency[u]:
                    if alive[v]:
                        nxt.add(int(v))
            front = nxt
            for u in list(front):
                alive[u] = False
        for u in indep:
            alive[u] = False
    # forced completion: residual nodes are > 2 hops from everything chosen
    for u in sorted(int(x) for x in np.flatnonzero(alive)):
        if not alive[u]:
            continue
        chosen.append(u)
        alive[u] = False
        alive[sub.adjacency[u]] = False
    return np.array(sorted(chosen), dtype=np.int64)


def ruling_set_2b(view: UnweightedGraphView, u_set, t: int, epsilon: float,
                  seed, runtime: Runtime | None = None) -> RulingSetResult:
    """Independent set of G^t[U] covering U within a small G^t radius.

    Phase-sparsified: each phase marks survivors with probability aimed at
    the current degree target n^(1-eps*p), covers around an inner ruling
    set of the marked sample, and removes covered nodes. A final full
    phase finishes the residual.
    """
    if t < 2:
        raise InputError("t must be >= 2")
    if not 0 < epsilon < 1:
        raise InputError("epsilon must be in (0,1)")
    n = view.n
    u_mask = np.zeros(n, dtype=bool)
    u_mask[np.asarray(list(u_set), dtype=np.int64)] = True
    if not np.any(u_mask):
        return RulingSetResult(np.empty(0, dtype=np.int64), 0, 0)
    members = []
    phases = math.ceil(1.0 / epsilon)
    inner_iters = math.ceil(math.log(max(math.log(max(
        math.log(max(n, 3)), 3)), 3))) + 3
    residual_degrees = []
    uncovered = u_mask.copy()
    logn = max(math.log(max(n, 2)), 1.0)
    for p in range(1, phases + 2):
        if not np.any(uncovered):
            break
        if p <= phases:
            target = n ** (1.0 - epsilon * p)
            prob = min(1.0, LUBY_MARK_C * logn / max(target, 1.0))
        else:
            prob = 1.0
        rng = np.random.default_rng(np.random.SeedSequence(
            _as_entropy(seed), spawn_key=(7, p)))
        marked_mask = uncovered & (rng.random(n) < prob)
        if not np.any(marked_mask):
            continue
        marked = np.flatnonzero(marked_mask)
        sub = _induced_power_graph(view, marked, t, runtime)
        got = _inner_covering(sub, marked, inner_iters, (seed, "inner", p))
        if got.size:
            members.extend(int(x) for x in got)
            # drop everything within (b_in + 1) = 3 power-graph hops
            cover = bfs_hops(view, got, max_depth=3 * t)
            uncovered &= ~((cover >= 0) & (cover <= 3 * t))
        if runtime is not None:
            runtime.ledger.charge("ruling_cover", 3 * t * CHARGE_HOP)
        # residual degree of the power graph, measured on a sample
        residual_degrees.append(_max_power_degree(view, uncovered, t))
    members = np.array(sorted(set(members)), dtype=np.int64)
    b_out = 0
    if members.size:
        hops = bfs_hops(view, members)
        reach = hops[u_mask & (hops >= 0)]
        b_out = int(math.ceil(reach.max() / t)) if reach.size else 0
    return RulingSetResult(members, b_out, phases, residual_degrees)


def _max_power_degree(view, mask, t, sample_cap=200):
    nodes = np.flatnonzero(mask)
    if nodes.size == 0:
        return 0
    take = nodes[:sample_cap]
    best = 0
    for u in take:
        cnt = len(power_neighbors(view, int(u), t, restrict=mask))
        best = max(best, cnt)
    return best


@dataclass
class CoverSetResult:
    members: np.ndarray
    b_cover: int                # all nodes within b_cover * t hops
    covered_weight: float
    total_weight: float
    uncovered_frac: float
    luby_iterations: int
    mis_iterations: int


def weighted_cover_set(view: UnweightedGraphView, weights, t: int,
                       epsilon: float, seed,
                       runtime: Runtime | None = None) -> CoverSetResult:
    """Independent set of G^t whose 5t-hop neighborhoods cover most weight.

    Power-of-two weight classes each run repeated adapted Luby steps on
    G^(2t)[class]; the union of marked nodes is thinned to an MIS of G^t,
    and the remaining uncovered nodes are patched by ruling_set_2b so
    every node ends within a bounded radius.
    """
    if t < 1:
        raise InputError("t must be >= 1")
    n = view.n
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0):
        raise InputError("weights must be nonnegative")
    pos = w > 0
    classes = {}
    if np.any(pos):
        scaled = w[pos] / w[pos].min()   # rescale so classes start at 2^0
        cls = np.floor(np.log2(scaled)).astype(np.int64)
        ids = np.flatnonzero(pos)
        for c in np.unique(cls):
            classes[int(c)] = ids[cls == c]
    luby_iters_target = math.ceil(LUBY_MARK_C * math.log2(1.0 / min(epsilon, 0.5)))
    luby_iterations = 0
    marked_all = []
    for c, nodes in sorted(classes.items()):
        cls_mask = np.zeros(n, dtype=bool)
        cls_mask[nodes] = True
        sub = _induced_power_graph(view, nodes, 2 * t, runtime)
        alive = cls_mask.copy()
        for it in range(luby_iters_target):
            if not np.any(alive):
                break
            luby_iterations += 1
            deg = np.array([
                int(np.count_nonzero(alive[sub.adjacency[u]])) if alive[u] else 0
                for u in range(n)], dtype=np.float64)
            d_hat = np.maximum(deg, 1.0)
            marked = luby_cover_step(sub, d_hat, (seed, "class", c, it),
                                     alive=alive)
            if marked.size == 0:
                continue
            marked_all.extend(int(x) for x in marked)
            # covered: within 2 hops in the class power graph (4t in G)
            cover = bfs_hops(view, marked, max_depth=4 * t)
            alive &= ~((cover >= 0) & (cover <= 4 * t))
            if runtime is not None:
                runtime.ledger.charge("cover_luby", 6 * t * CHARGE_HOP)
    marked_all = sorted(set(marked_all))
    mis_iterations = 0
    if marked_all:
        sub = _induced_power_graph(view, np.array(marked_all, dtype=np.int64),
                                   t, runtime)
        s_prime, mis_iterations = mis(sub, _as_entropy((seed, "mis")),
                                      alive=_mask(n, marked_all))
        if runtime is not None:
            runtime.ledger.charge("cover_mis", mis_iterations * CHARGE_HOP)
    else:
        s_prime = np.empty(0, dtype=np.int64)
    # coverage bookkeeping at radius 5t
    hops = bfs_hops(view, s_prime) if s_prime.size else np.full(n, -1)
    covered = (hops >= 0) & (hops <= 5 * t)
    covered_weight = float(w[covered].sum())
    total_weight = float(w.sum())
    # patch every remaining node within a bounded radius
    far = np.flatnonzero(~covered)
    members = list(int(x) for x in s_prime)
    if far.size:
        patch = ruling_set_2b(view, far, max(t, 2), 0.5,
                              (seed, "patch"), runtime)
        members.extend(int(x) for x in patch.members)
    members = np.array(sorted(set(members)), dtype=np.int64)
    hops = bfs_hops(view, members) if members.size else np.full(n, -1)
    reach = hops[hops >= 0]
    b_cover = int(math.ceil(reach.max() / t)) if reach.size else 0
    uncovered_frac = (1.0 - covered_weight / total_weight) if total_weight > 0 else 0.0
    return CoverSetResult(members, b_cover, covered_weight, total_weight,
                          uncovered_frac, luby_iterations, mis_iterations)


def _mask(n, ids):
    m = np.zeros(n, dtype=bool)
    m[np.asarray(list(ids), dtype=np.int64)] = True
    return m


def _as_entropy(seed):
    """Flatten a structured (possibly nested) seed into SeedSequence entropy."""
    if isinstance(seed, (int, np.integer)):
        return int(seed) & 0xFFFFFFFFFFFFFFFF
    if isinstance(seed, str):
        acc = 0xCBF29CE484222325
        for ch in seed:
            acc = ((acc ^ ord(ch)) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
        return acc
    if isinstance(seed, tuple):
        acc = 0x9E3779B97F4A7C15
        for part in seed:
            acc = (acc * 0x100000001B3 ^ _as_entropy(part)) & 0xFFFFFFFFFFFFFFFF
        return acc
    return int(seed) & 0xFFFFFFFFFFFFFFFF
