"""The seven-step parallel facility-location solve with LMP dual certificates.

Pipeline outline: estimate per-facility radii from ball counts at doubling
scales (I), quantize per-client dual values from per-scale minimum radii
(II), freeze duals of clients with much-cheaper neighbors (III), select
approximately paid facilities (IV), connect facilities that can share a
contributing client into a sparse dependency graph (V), pick well-separated
cluster centers by a weighted cover set and cluster around them (VI), and
open the centroid-nearest facility per cluster (VII).

Geometry is only accessed through two-hop distances of a metric graph; in
exact mode those equal true distances and every quantization sandwich below
is deterministic, which is what the property suites check. The alternative
opening rule (`lmp_dual_oracle`) produces an exactly-feasible dual solution
used to certify the Lagrangian-multiplier-preserving inequality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import ConstantTable, make_constants
from .core import FLInstance, PointSet, UnionGeometry, build_union, cost_matrix
from .errors import CertificateError, InputError, PipelineError
from .runtime import (CHARGE_GROUP_AGGREGATE, CHARGE_HOP, CHARGE_SORT,
                      CHARGE_SPANNER_BUILD, ClusterConfig, RoundLedger, Runtime)
from .rulingsets import UnweightedGraphView, bfs_hops, weighted_cover_set
from .spanner import LshParams, SpannerGraph, build_spanner, exact_mode_spanner

_PAID_RTOL = 1e-9


@dataclass
class SolveConfig:
    mode: str = "exact"            # "exact" or "lsh"
    gamma: float = 5.0             # constant-table parameter
    sigma: float = 0.5
    epsilon: float = 0.5           # edge/memory budget exponent
    seed: int = 0
    repetitions: int = 6           # hash draws per scale in lsh mode
    grid_cell: float = 4.0
    max_cover_retries: int = 5

    def table(self) -> ConstantTable:
        return make_constants(self.gamma)


@dataclass
class DualState:
    alpha0: np.ndarray
    alpha1: np.ndarray
    problematic: np.ndarray
    radii_hat: np.ndarray
    radii_step2: np.ndarray        # radii fed to step II (exact in exact mode)


@dataclass
class DependencyBase:
    members: np.ndarray            # facility indices in S
    edges: set                     # undirected pairs of facility indices
    class_of: dict                 # facility index -> list of class ids

    def view(self, nf: int) -> UnweightedGraphView:
        adj = [[] for _ in range(nf)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return UnweightedGraphView(
            [np.array(sorted(set(a)), dtype=np.int64) for a in adj])


@dataclass
class Clustering:
    centers: np.ndarray            # facility indices (S_0)
    center_of_facility: dict       # S facility index -> center index
    f_c: np.ndarray                # per client: facility index
    c_plus: np.ndarray             # per client: covered within 5t flag
    far_facilities: set
    hops_to_center: dict
    coverage_frac: float
    reseeds: int
    b_cover: int


@dataclass
class FLSolution:
    lam: float
    opened: list                   # facility indices
    assign: np.ndarray             # per client: opened facility index
    duals: DualState
    connection_cost: float
    ledger: RoundLedger
    clusters: Clustering | None = None
    paid_set: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self):
        out = {
            "lambda": self.lam,
            "opened": [int(f) for f in self.opened],
            "assignment": [[int(c), int(f)] for c, f in enumerate(self.assign)],
            "connection_cost": self.connection_cost,
            "ledger": self.ledger.as_dict(),
        }
        out.update({k: v for k, v in self.diagnostics.items()
                    if isinstance(v, (int, float, str, bool))})
        return out


class Workspace:
    """Shared per-solve state: geometry, two-hop metric, true costs."""

    def __init__(self, inst: FLInstance, cfg: SolveConfig, runtime: Runtime,
                 graph: SpannerGraph | None = None):
        self.inst = inst
        self.cfg = cfg
        self.ct = cfg.table()
        self.rt = runtime
        self.union = build_union(inst)
        if graph is None:
            graph = self._build_graph()
        self.graph = graph
        self.d2 = two_hop_matrix(graph)
        u = self.union
        self.fac_nodes = u.fac_node
        self.cli_nodes = u.cli_node
        self.d2_cf = self.d2[np.ix_(u.cli_node, u.fac_node)]
        self.d2_cc = self.d2[np.ix_(u.cli_node, u.cli_node)]
        self.d2_ff = self.d2[np.ix_(u.fac_node, u.fac_node)]
        self.cost_cf = cost_matrix(inst.clients, inst.facilities)
        top = max(self.union.diameter, 1.0)
        # -3 guarantees a feasible radius scale even when graph shortcuts
        # put many clients at two-hop distance 1/4
        self.scales = list(range(-3, math.ceil(math.log2(top)) + 2))

    def _build_graph(self) -> SpannerGraph:
        pts = PointSet(self.union.coords)
        self.rt.ledger.charge("spanner", CHARGE_SPANNER_BUILD)
        if self.cfg.mode == "exact":
            return exact_mode_spanner(pts)
        params = LshParams(
            repetitions=self.cfg.repetitions, grid_cell=self.cfg.grid_cell,
            gamma=max(1.25, self.cfg.gamma / 4.0),
            rotation_seed=self.cfg.seed)
        return build_spanner(pts, self.cfg.epsilon, params,
                             diameter=self.union.diameter)


def two_hop_matrix(graph: SpannerGraph) -> np.ndarray:
    """Dense matrix of <=2-hop graph distances (the simulator's shortcut
    for ball queries; rounds are charged by the callers, not here)."""
    if "dist" in graph.meta:
        return graph.meta["dist"]
    n = graph.n
    if n > 4096:
        raise InputError(f"two-hop matrix guard: n={n} > 4096")
    d2 = np.full((n, n), np.inf)
    np.fill_diagonal(d2, 0.0)
    nbr_ids = [[] for _ in range(n)]
    nbr_w = [[] for _ in range(n)]
    for u, v, w in zip(graph.edges_u, graph.edges_v, graph.edges_w):
        nbr_ids[int(u)].append(int(v))
        nbr_w[int(u)].append(float(w))
        nbr_ids[int(v)].append(int(u))
        nbr_w[int(v)].append(float(w))
    nbr_ids = [np.array(a, dtype=np.int64) for a in nbr_ids]
    nbr_w = [np.array(a) for a in nbr_w]
    for x in range(n):
        row = d2[x]
        ids_x, w_x = nbr_ids[x], nbr_w[x]
        if ids_x.size:
            row[ids_x] = np.minimum(row[ids_x], w_x)
        for z, w1 in zip(ids_x, w_x):
            ids_z = nbr_ids[z]
            if ids_z.size:
                row[ids_z] = np.minimum(row[ids_z], w1 + nbr_w[z])
    return d2


# ---------------------------------------------------------------------------
# Steps I-IV: radii, dual values, problematic clients, paid facilities
# ---------------------------------------------------------------------------

def step1_radii(ws: Workspace) -> np.ndarray:
    """Power-of-two radius estimates from client counts in two-hop balls.

    r_hat = 2^l for the largest scale l with count(l) * 4^l <= lambda;
    a facility that sees no client at any scale gets the +inf sentinel.
    """
    lam = ws.inst.lam
    nf = ws.inst.facilities.n
    ws.rt.ledger.charge("step1_radii", 2 * CHARGE_HOP)
    best = np.full(nf, -np.inf)
    top_counts = None
    for lvl in ws.scales:
        r = 2.0 ** lvl
        counts = (ws.d2_cf <= r).sum(axis=0).astype(np.float64)
        ok = counts * 4.0 ** lvl <= lam
        best = np.where(ok, lvl, best)
        top_counts = counts
    r_hat = np.where(np.isfinite(best), 2.0 ** best, np.nan)
    r_hat = np.where(top_counts == 0, np.inf, r_hat)
    if np.any(np.isnan(r_hat)):
        raise PipelineError("no feasible radius scale for some facility")
    return r_hat


def step2_alpha0(ws: Workspace, radii: np.ndarray) -> np.ndarray:
    """Quantized client dual seeds from per-scale minimum facility radii.

    alpha0 = min_l max{rho(l)^2, 4^l} / (8 gamma^2), rho(l) the smallest
    radius among facilities within two-hop distance 2^l of the client.
    """
    nc = ws.inst.clients.n
    ws.rt.ledger.charge("step2_alpha0", 2 * CHARGE_HOP)
    finite = np.where(np.isfinite(radii), radii, np.inf)
    alpha_plus = np.full(nc, np.inf)
    for lvl in ws.scales:
        r = 2.0 ** lvl
        in_ball = ws.d2_cf <= r
        rho = np.where(in_ball, finite[None, :], np.inf).min(axis=1)
        val = np.maximum(rho ** 2, 4.0 ** lvl)
        alpha_plus = np.minimum(alpha_plus, val)
    if np.any(~np.isfinite(alpha_plus)):
        raise InputError("client with no reachable facility at any scale")
    return alpha_plus / (8.0 * ws.ct.gamma ** 2)


def step3_problematic(ws: Workspace, alpha0: np.ndarray,
                      alpha_star: np.ndarray | None):
    """Flag clients with a Q-factor-cheaper client in their dual ball.

    Exact mode evaluates the rule at radius gamma1 * sqrt(alpha*) with the
    exact dual optimum; without it (lsh mode) the search radius is the
    conservative gamma1 * sqrt(C_D+ * alpha0) over two-hop balls.
    """
    ct = ws.ct
    ws.rt.ledger.charge("step3_problematic", 2 * CHARGE_HOP)
    if alpha_star is not None:
        radius = ct.gamma1 * np.sqrt(alpha_star)
    else:
        radius = ct.gamma1 * np.sqrt(ct.c_d_plus * alpha0)
    witness = alpha0[None, :] <= alpha0[:, None] / ct.q
    flags = np.any((ws.d2_cc <= radius[:, None]) & witness, axis=1)
    alpha1 = np.where(flags, alpha0, ct.c_a * alpha0)
    return flags, alpha1


def step4_paid(ws: Workspace, duals: DualState) -> np.ndarray:
    """Facilities whose kappa-scaled hinge payments reach lambda.

    The candidate region sqrt(kappa*rho)*C_R*r_hat contains every client
    whose kappa-hinge is positive, so the restricted sum equals the full
    one and the paid-set sandwich holds exactly.
    """
    ct = ws.ct
    lam = ws.inst.lam
    ws.rt.ledger.charge("step4_paid", 2 * CHARGE_HOP)
    r4 = np.sqrt(ct.kappa * ct.rho) * ct.c_r * duals.radii_hat
    r4 = np.where(np.isfinite(r4), r4, 0.0)
    hinge = np.maximum(ct.kappa * duals.alpha1[:, None] - ws.cost_cf, 0.0)
    mask = (ws.d2_cf <= r4[None, :]) & (ws.cost_cf <= (r4 ** 2)[None, :])
    sums = (hinge * mask).sum(axis=0)
    return np.flatnonzero(sums >= lam * (1.0 - _PAID_RTOL))


def step5_dependency(ws: Workspace, paid: np.ndarray,
                     radii_hat: np.ndarray) -> DependencyBase:
    """Sparse base graph whose square contains the true dependency graph.

    Facilities are binned into overlapping radius classes; within a class,
    edges join pairs whose class-graph connection is within the distance
    budget 2^(i+2) * sqrt(kappa*rho) * C_R^2 * zeta.
    """
    ct = ws.ct
    ws.rt.ledger.charge("step5_dependency", CHARGE_SPANNER_BUILD)
    edges = set()
    class_of = {int(f): [] for f in paid}
    if paid.size == 0:
        return DependencyBase(paid, edges, class_of)
    r = radii_hat[paid]
    width = ct.c_r * ct.zeta
    lo = math.floor(math.log2(r.min())) - max(1, math.ceil(math.log2(2 * width)))
    hi = math.floor(math.log2(r.max()))
    factor = 4.0 * math.sqrt(ct.kappa * ct.rho) * ct.c_r ** 2 * ct.zeta
    for i in range(lo, hi + 1):
        base = 2.0 ** i
        in_class = (r >= base) & (r <= 2.0 * base * width)
        members = paid[in_class]
        if members.size < 1:
            continue
        for f in members:
            class_of[int(f)].append(i)
        if members.size < 2:
            continue
        thresh = base * factor
        sub = _class_graph_edges(ws, members, thresh)
        edges.update(sub)
    return DependencyBase(paid, edges, class_of)


def _class_graph_edges(ws: Workspace, members: np.ndarray, thresh: float):
    """Edges within one radius class whose connection length is in budget."""
    out = set()
    nodes = ws.fac_nodes[members]
    if ws.cfg.mode == "exact":
        dm = ws.d2[np.ix_(nodes, nodes)]
        ii, jj = np.nonzero(np.triu(dm <= thresh, k=1))
        for a, b in zip(ii, jj):
            out.add((int(members[a]), int(members[b])))
        return out
    pts = PointSet(ws.union.coords[nodes])
    params = LshParams(
        repetitions=ws.cfg.repetitions, grid_cell=ws.cfg.grid_cell,
        gamma=max(1.25, ws.cfg.gamma / 4.0),
        rotation_seed=ws.cfg.seed + 101)
    try:
        g = build_spanner(pts, min(1.0, ws.cfg.epsilon + 0.25), params)
    except Exception:
        g = exact_mode_spanner(pts)
    if "dist" in g.meta:
        dm = g.meta["dist"]
        ii, jj = np.nonzero(np.triu(dm <= thresh, k=1))
        for a, b in zip(ii, jj):
            out.add((int(members[a]), int(members[b])))
        return out
    for u, v, w in zip(g.edges_u, g.edges_v, g.edges_w):
        if w <= thresh:
            a, b = int(members[u]), int(members[v])
            out.add((a, b) if a < b else (b, a))
    return out


# ---------------------------------------------------------------------------
# Steps VI-VII: clustering and opening
# ---------------------------------------------------------------------------

COVER_T = 6   # pairwise distance > 6 in the base graph => >= 4 in H


def _lll(n: int) -> float:
    return math.log(max(math.log(max(math.log(max(n, 3)), 1.5)), 1.5))


def step6_cluster(ws: Workspace, duals: DualState, paid: np.ndarray,
                  dep: DependencyBase) -> Clustering:
    """Pick separated centers, then cluster facilities and clients.

    Every client first anchors to the smallest-radius paid facility inside
    its dual search ball; paid-facility weights are the summed dual seeds
    of their anchored clients. Center selection retries with a fresh seed
    when the covered dual mass misses the 1 - 1/log(n) bullet.
    """
    ct = ws.ct
    inst = ws.inst
    nc = inst.clients.n
    nf = inst.facilities.n
    in_s = np.zeros(nf, dtype=bool)
    in_s[paid] = True
    ws.rt.ledger.charge("step6_anchor", 2 * CHARGE_HOP)

    radius = np.sqrt(ct.eta * duals.alpha0)
    f_c = _anchor_facilities(ws, in_s, duals.radii_hat, radius)

    weights = np.zeros(nf)
    agg = ws.rt.group_aggregate(f_c.astype(np.int64), duals.alpha0, "sum",
                                phase="step6_weights")
    weights[f_c] = agg

    # work in S-index space: node i of the view is facility paid[i]
    s_index = {int(f): i for i, f in enumerate(paid)}
    adj = [[] for _ in range(paid.size)]
    for u, v in dep.edges:
        adj[s_index[u]].append(s_index[v])
        adj[s_index[v]].append(s_index[u])
    view = UnweightedGraphView(
        [np.array(sorted(set(a)), dtype=np.int64) for a in adj])
    w_s = weights[paid]
    fc_s = np.array([s_index[int(f)] for f in f_c], dtype=np.int64)

    eps_cover = 1.0 / max(2.0, math.log(max(nc + nf, 3)))
    total_alpha = float(duals.alpha0.sum())
    reseeds = 0
    best = None
    for attempt in range(ws.cfg.max_cover_retries):
        cover = weighted_cover_set(
            view, w_s, COVER_T, eps_cover,
            (ws.cfg.seed, "cover", attempt), ws.rt)
        hops = bfs_hops(view, cover.members)
        a_plus = float(duals.alpha0[(hops[fc_s] >= 0)
                                    & (hops[fc_s] <= 5 * COVER_T)].sum())
        frac = (total_alpha - a_plus) / total_alpha if total_alpha > 0 else 0.0
        if best is None or frac < best[0]:
            best = (frac, cover, hops)
        if frac <= eps_cover + 1e-12:
            break
        reseeds += 1
    frac, cover, hops = best

    center_of_s, hops_to_center_s = _assign_clusters(view, cover.members)
    cap = math.ceil(_lll(max(nc + nf, 3))) + 3
    center_of = {int(paid[i]): int(paid[c]) for i, c in center_of_s.items()}
    hops_to_center = {int(paid[i]): h for i, h in hops_to_center_s.items()}
    far = {f for f, h in hops_to_center.items() if h > cap}
    c_plus = (hops[fc_s] >= 0) & (hops[fc_s] <= 5 * COVER_T)
    centers = np.array(sorted(int(paid[i]) for i in cover.members),
                       dtype=np.int64)
    ws.rt.ledger.charge("step6_bfs",
                        max(1, max(hops_to_center.values(), default=1)))
    return Clustering(centers, center_of, f_c, c_plus, far, hops_to_center,
                      1.0 - frac, reseeds, cover.b_cover)


def _anchor_facilities(ws: Workspace, in_s, radii_hat, radius) -> np.ndarray:
    """Smallest-radius paid facility inside each client's search ball.

    Argmin ties break to the lowest facility id. In graph mode the search
    is retried once with a doubled ball before giving up; exact mode never
    retries (existence is guaranteed there).
    """
    cand = (ws.d2_cf <= radius[:, None]) & in_s[None, :]
    growth = 0
    while True:
        misses = np.flatnonzero(~cand.any(axis=1))
        if misses.size == 0:
            break
        if ws.cfg.mode == "exact" or growth >= 1:
            raise PipelineError(
                f"{misses.size} clients found no paid facility in their "
                f"search ball (first: client {int(misses[0])})")
        growth += 1
        cand = (ws.d2_cf <= 2.0 * radius[:, None]) & in_s[None, :]
    masked = np.where(cand, radii_hat[None, :], np.inf)
    f_c = np.argmin(masked, axis=1)  # first minimum = lowest facility id
    return f_c.astype(np.int64)


def _assign_clusters(view, centers):
    """First-reach BFS from all centers; ties favor the lowest center id."""
    import heapq
    center_of = {}
    hops = {}
    heap = [(0, int(c), int(c)) for c in sorted(int(x) for x in centers)]
    heapq.heapify(heap)
    while heap:
        d, ctr, u = heapq.heappop(heap)
        if u in center_of:
            continue
        center_of[u] = ctr
        hops[u] = d
        for v in view.adjacency[u]:
            if int(v) not in center_of:
                heapq.heappush(heap, (d + 1, ctr, int(v)))
    missing = [u for u in range(view.n) if u not in center_of]
    if missing:
        raise PipelineError(
            f"{len(missing)} paid facilities unreachable from any center")
    return center_of, hops


def step7_open(ws: Workspace, clustering: Clustering):
    """Open the facility nearest each cluster's client centroid.

    By the squared-distance decomposition this minimizes the exact summed
    cost over the cluster's facilities; ties break to the lowest id.
    """
    inst = ws.inst
    ws.rt.ledger.charge("step7_open", 2 * CHARGE_GROUP_AGGREGATE)
    cluster_of_client = np.array(
        [clustering.center_of_facility[int(f)] for f in clustering.f_c],
        dtype=np.int64)
    opened_of_cluster = {}
    fac_by_cluster = {}
    for f, ctr in clustering.center_of_facility.items():
        fac_by_cluster.setdefault(ctr, []).append(f)
    for ctr in sorted(set(int(x) for x in cluster_of_client)):
        members = np.flatnonzero(cluster_of_client == ctr)
        mu = inst.clients.coords[members].mean(axis=0)
        fac_ids = sorted(fac_by_cluster[ctr])
        fc = inst.facilities.coords[fac_ids]
        d2 = ((fc - mu[None, :]) ** 2).sum(axis=1)
        opened_of_cluster[ctr] = int(fac_ids[int(np.argmin(d2))])
    opened = sorted(set(opened_of_cluster.values()))
    assign = np.array([opened_of_cluster[int(ctr)]
                       for ctr in cluster_of_client], dtype=np.int64)
    conn = float(ws.cost_cf[np.arange(inst.clients.n), assign].sum())
    return opened, assign, conn


# ---------------------------------------------------------------------------
# End-to-end solve
# ---------------------------------------------------------------------------

def solve_fl(inst: FLInstance, cfg: SolveConfig | None = None,
             runtime: Runtime | None = None,
             graph: SpannerGraph | None = None) -> FLSolution:
    """Run steps I-VII on a normalized instance and return the solution."""
    cfg = cfg or SolveConfig()
    if inst.facilities.n == 0:
        raise InputError("instance has no facilities")
    if runtime is None:
        n_total = inst.facilities.n + inst.clients.n
        runtime = Runtime(ClusterConfig(
            n=max(n_total, 2), sigma=cfg.sigma,
            global_budget_epsilon=cfg.epsilon))
    ws = Workspace(inst, cfg, runtime, graph=graph)
    radii_hat = step1_radii(ws)
    if np.any(np.isinf(radii_hat)):
        raise PipelineError("facility with zero reachable clients")
    alpha_star = None
    if cfg.mode == "exact":
        from .oracles import exact_alpha_star, exact_radii
        radii_step2 = exact_radii(inst)
        alpha_star = exact_alpha_star(inst, radii_step2)
    else:
        radii_step2 = radii_hat
    alpha0 = step2_alpha0(ws, radii_step2)
    flags, alpha1 = step3_problematic(ws, alpha0, alpha_star)
    duals = DualState(alpha0, alpha1, flags, radii_hat, radii_step2)
    paid = step4_paid(ws, duals)
    if paid.size == 0:
        raise PipelineError("no approximately paid facility exists")
    dep = step5_dependency(ws, paid, radii_hat)
    clustering = step6_cluster(ws, duals, paid, dep)
    opened, assign, conn = step7_open(ws, clustering)
    sol = FLSolution(
        lam=inst.lam, opened=opened, assign=assign, duals=duals,
        connection_cost=conn, ledger=runtime.ledger, clusters=clustering,
        paid_set=paid,
        diagnostics={
            "mode": cfg.mode, "gamma": cfg.gamma,
            "n_paid": int(paid.size), "n_centers": int(clustering.centers.size),
            "coverage_frac": clustering.coverage_frac,
            "reseeds": clustering.reseeds,
            "n_far_facilities": len(clustering.far_facilities),
            "b_cover": clustering.b_cover,
            "gamma_eff": ws.graph.gamma_eff,
        })
    sol.diagnostics["workspace"] = ws
    return sol


# ---------------------------------------------------------------------------
# Alternative opening: the exact dual certificate
# ---------------------------------------------------------------------------

@dataclass
class DualCertificate:
    alpha: np.ndarray
    beta: np.ndarray               # (clients x facilities) hinge matrix
    xi: dict                       # center facility -> xi value
    opened: list                   # exactly-paid facility per center
    center_clients: dict           # center -> client index array


def bruteforce_dependency_edges(inst: FLInstance, duals: DualState,
                                members, kappa: float):
    """The true dependency graph: facilities sharing a kappa-contributor."""
    d2 = cost_matrix(inst.clients, inst.facilities)
    contrib = kappa * duals.alpha1[:, None] > d2
    members = sorted(int(m) for m in members)
    sub = contrib[:, members].astype(np.int64)
    share = sub.T @ sub
    adj = {m: set() for m in members}
    for i, a in enumerate(members):
        for j in range(i + 1, len(members)):
            if share[i, j] > 0:
                adj[a].add(members[j])
                adj[members[j]].add(a)
    return adj


def _hinge_total(alpha, costs):
    return float(np.maximum(alpha - costs, 0.0).sum())


def _xi_root(a, b, costs, const, lam):
    """Smallest xi in [0,1] with sum[a + xi*b - cost]^+ + const = lam.

    The left side is piecewise linear and nondecreasing in xi; evaluate it
    at the hinge breakpoints and interpolate inside the crossing segment
    (exact there, since the function is linear on each segment).
    """
    def g(xi):
        return float(np.maximum(a + xi * b - costs, 0.0).sum()) + const

    tol = 1e-12 * max(lam, 1.0)
    if g(0.0) >= lam - tol:
        return 0.0
    knots = {0.0, 1.0}
    active = b > 0
    if np.any(active):
        x = (costs[active] - a[active]) / b[active]
        for v in x:
            if 0.0 < v < 1.0:
                knots.add(float(v))
    knots = sorted(knots)
    vals = [g(x) for x in knots]
    if vals[-1] < lam * (1.0 - 1e-9):
        return None
    for (x0, x1), (g0, g1) in zip(zip(knots[:-1], knots[1:]),
                                  zip(vals[:-1], vals[1:])):
        if g1 >= lam - tol:
            if g1 <= g0 + tol:
                return x1
            return x0 + (lam - g0) * (x1 - x0) / (g1 - g0)
    return 1.0


def lmp_dual_oracle(inst: FLInstance, duals: DualState, paid, centers,
                    ct: ConstantTable) -> DualCertificate:
    """Exact-payment dual solution via per-center hinge root finding.

    For each center, xi interpolates client duals between alpha0 and
    kappa*alpha1 until some facility in the center's closed dependency
    neighborhood is exactly paid; that facility is opened.
    """
    nc, nf = inst.clients.n, inst.facilities.n
    d2 = cost_matrix(inst.clients, inst.facilities)
    kappa = ct.kappa
    h_adj = bruteforce_dependency_edges(inst, duals, paid, kappa)
    alpha = duals.alpha0.copy()
    xi_of = {}
    opened = []
    center_clients = {}
    base_hinges = np.maximum(duals.alpha0[:, None] - d2, 0.0)
    for f in sorted(int(x) for x in centers):
        cf_mask = kappa * duals.alpha1 > d2[:, f]
        cf_idx = np.flatnonzero(cf_mask)
        center_clients[f] = cf_idx
        neigh = [f] + sorted(h_adj.get(f, ()))
        best = None
        for fp in neigh:
            a = duals.alpha0[cf_idx]
            b = kappa * duals.alpha1[cf_idx] - a
            costs = d2[cf_idx, fp]
            const = float(base_hinges[~cf_mask, fp].sum())
            root = _xi_root(a, b, costs, const, inst.lam)
            if root is not None and (best is None or (root, fp) < best):
                best = (root, fp)
        if best is None:
            raise CertificateError(
                f"no facility near center {f} reaches payment at xi=1; "
                f"constants outside their regime")
        xi_of[f] = best[0]
        opened.append(best[1])
        alpha[cf_idx] = (duals.alpha0[cf_idx]
                         + best[0] * (kappa * duals.alpha1[cf_idx]
                                      - duals.alpha0[cf_idx]))
    beta = np.maximum(alpha[:, None] - d2, 0.0)
    return DualCertificate(alpha, beta, xi_of, opened, center_clients)


@dataclass
class LmpReport:
    alpha_nonneg: bool
    beta_nonneg: bool
    hinge_consistent: bool
    payments_feasible: bool
    bounds_hold: bool
    at_most_one: bool
    opened_payment_exact: bool
    lambda_emp: float
    denominator: float
    worst_payment_slack: float

    @property
    def ok(self) -> bool:
        return (self.alpha_nonneg and self.beta_nonneg
                and self.hinge_consistent and self.payments_feasible
                and self.bounds_hold and self.at_most_one
                and self.opened_payment_exact)

    def as_dict(self):
        d = self.__dict__.copy()
        d["ok"] = self.ok
        return d


def verify_lmp(inst: FLInstance, solution: FLSolution,
               cert: DualCertificate, ct: ConstantTable) -> LmpReport:
    """Check dual feasibility, the alpha bounds, exact payments, and the
    empirical LMP ratio of the certificate against the solution."""
    d2 = cost_matrix(inst.clients, inst.facilities)
    lam = inst.lam
    tol = 1e-9 * max(lam, 1.0)
    alpha, beta = cert.alpha, cert.beta
    alpha_nonneg = bool(np.all(alpha >= -1e-12))
    beta_nonneg = bool(np.all(beta >= -1e-12))
    hinge = np.maximum(alpha[:, None] - d2, 0.0)
    hinge_consistent = bool(np.allclose(beta, hinge, rtol=1e-9, atol=1e-9))
    payments = beta.sum(axis=0)
    payments_feasible = bool(np.all(payments <= lam + tol))
    worst = float((payments - lam).max())
    dd = duals_of(solution)
    bounds_hold = bool(
        np.all(alpha >= dd.alpha0 * (1 - 1e-9) - 1e-12)
        and np.all(alpha <= ct.kappa * dd.alpha1 * (1 + 1e-9) + 1e-12))
    opened = sorted(set(cert.opened))
    pos = beta[:, opened] > tol
    at_most_one = bool(np.all(pos.sum(axis=1) <= 1))
    opened_payment_exact = bool(np.all(
        np.abs(payments[opened] - lam) <= 1e-9 * max(lam, 1.0)))
    total_alpha = float(alpha.sum())
    denom = total_alpha - len(solution.opened) * lam
    if denom < -1e-9 * max(total_alpha, 1.0):
        raise PipelineError(f"negative dual surplus {denom}")
    lam_emp = (solution.connection_cost / denom) if denom > 0 else math.inf
    return LmpReport(alpha_nonneg, beta_nonneg, hinge_consistent,
                     payments_feasible, bounds_hold, at_most_one,
                     opened_payment_exact, lam_emp, denom, worst)


def duals_of(solution: FLSolution) -> DualState:
    return solution.duals


def certified_solution(inst: FLInstance, cfg: SolveConfig | None = None):
    """solve_fl plus the dual certificate and its verification report."""
    sol = solve_fl(inst, cfg)
    ct = (cfg or SolveConfig()).table()
    cert = lmp_dual_oracle(inst, sol.duals, sol.paid_set,
                           sol.clusters.centers, ct)
    report = verify_lmp(inst, sol, cert, ct)
    return sol, cert, report
