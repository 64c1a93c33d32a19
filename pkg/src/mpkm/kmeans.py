"""Reduction to exactly k centers: opening-cost bracketing plus rounding.

A geometric grid of opening costs is solved in parallel; either some run
opens exactly k facilities, or an adjacent pair brackets k and a single
biased coin interpolates between the two solutions, topped up with a
uniform sample of leftover facilities. Repeating the rounding and keeping
the cheapest outcome amplifies the expected guarantee.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import FLInstance, KMeansInstance, PointSet, cost_matrix, normalize
from .errors import InputError, PipelineError
from .facility import FLSolution, SolveConfig, Workspace, solve_fl
from .runtime import (CHARGE_BROADCAST, CHARGE_GROUP_AGGREGATE, ClusterConfig,
                      RoundLedger, Runtime)
from .spanner import SpannerGraph

C_REP = 2  # rounding repetitions per log2(n)


@dataclass
class LambdaBracket:
    lambda1: float
    lambda2: float
    sol1: FLSolution
    sol2: FLSolution

    @property
    def k1(self) -> int:
        return len(self.sol1.opened)

    @property
    def k2(self) -> int:
        return len(self.sol2.opened)

    def validate(self, k: int):
        if not (self.lambda2 <= self.lambda1 <= 2.0 * self.lambda2 + 1e-9):
            raise PipelineError("bracket spacing violated")
        if not (self.k1 <= k <= self.k2):
            raise PipelineError("bracket does not straddle k")


@dataclass
class KMeansSolution:
    k: int
    centers: np.ndarray
    phi: np.ndarray
    total_cost: float
    ledger: RoundLedger
    bracket: dict | None = None
    repetition_reports: list = field(default_factory=list)
    exact_hit: bool = False
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self):
        out = {
            "k": self.k,
            "centers": [int(z) for z in sorted(self.centers)],
            "cost": self.total_cost,
            "exact_hit": self.exact_hit,
            "repetitions": len(self.repetition_reports),
            "ledger": self.ledger.as_dict(),
        }
        if self.bracket:
            out["bracket"] = self.bracket
        out.update({k: v for k, v in self.diagnostics.items()
                    if isinstance(v, (int, float, str, bool))})
        return out


@dataclass
class LambdaTrace:
    lambdas: list
    opened_counts: list


def _lambda_grid(n: int, diameter: float):
    top = math.ceil(math.log2(max(n * max(diameter, 1.0) ** 2, 2.0)))
    return [2.0 ** i for i in range(top + 1)]


def search_lambda(km: KMeansInstance, cfg: SolveConfig,
                  graph: SpannerGraph | None = None):
    """Parallel opening-cost sweep; exact hit or a bracketing pair.

    Returns (bracket_or_none, exact_solution_or_none, merged_ledger, trace).
    Non-monotone sweeps are resolved by ranking all adjacent bracketing
    pairs by |k1-k| + |k2-k|, then by smaller lambda1.
    """
    pts = km.points
    from .core import pairwise_extremes
    _, diam = pairwise_extremes(pts)
    grid = _lambda_grid(pts.n, diam)
    runs = []
    ledgers = []
    for lam in grid:
        inst = FLInstance(pts, pts, lam)
        rt = Runtime(ClusterConfig(n=max(2 * pts.n, 2), sigma=cfg.sigma,
                                   global_budget_epsilon=cfg.epsilon))
        sol = solve_fl(inst, cfg, runtime=rt, graph=graph)
        runs.append(sol)
        ledgers.append(rt.ledger)
    merged = ledgers[0].merge_parallel(ledgers[1:])
    trace = LambdaTrace(list(grid), [len(s.opened) for s in runs])
    hits = [s for s in runs if len(s.opened) == km.k]
    if hits:
        best = min(hits, key=lambda s: (s.connection_cost, s.lam))
        return None, best, merged, trace
    candidates = []
    for i in range(len(grid) - 1):
        lo, hi = runs[i], runs[i + 1]   # hi has the larger lambda
        k1, k2 = len(hi.opened), len(lo.opened)
        if k1 <= km.k <= k2:
            candidates.append(
                (abs(k1 - km.k) + abs(k2 - km.k), hi.lam,
                 LambdaBracket(hi.lam, lo.lam, hi, lo)))
    if not candidates:
        raise PipelineError(
            "no opening cost brackets k="
            f"{km.k}; trace: {list(zip(trace.lambdas, trace.opened_counts))}")
    candidates.sort(key=lambda t: (t[0], t[1]))
    bracket = candidates[0][2]
    bracket.validate(km.k)
    return bracket, None, merged, trace


def select_f2prime(sol1: FLSolution, sol2: FLSolution, ws: Workspace):
    """Size-k1 subset of the lambda2 openings: approximate nearest
    neighbors of every lambda1 opening, padded by lowest residual ids.

    Returns (f2prime ids list, map f1 id -> its neighbor id, delta used).
    """
    f1 = sorted(sol1.opened)
    f2 = sorted(sol2.opened)
    if len(f2) < len(f1):
        raise PipelineError("bracket invariant violated: |F2| < |F1|")
    f2_arr = np.array(f2, dtype=np.int64)
    nn_map = {}
    chosen = []
    nodes2 = ws.fac_nodes[f2_arr]
    fallback = 0
    for f in f1:
        row = ws.d2[ws.fac_nodes[f], nodes2]
        if not np.any(np.isfinite(row)):
            dd = ((ws.union.coords[ws.fac_nodes[f2_arr]]
                   - ws.union.coords[ws.fac_nodes[f]]) ** 2).sum(axis=1)
            row = np.sqrt(dd)
            fallback += 1
        g = int(f2_arr[int(np.argmin(row))])
        nn_map[f] = g
        if g not in chosen:
            chosen.append(g)
    residual = [g for g in f2 if g not in chosen]
    while len(chosen) < len(f1):
        chosen.append(residual.pop(0))
    return sorted(chosen), nn_map, ws.graph.gamma_eff, fallback


def randomized_round(bracket: LambdaBracket, f2prime, nn_map, k: int, seed):
    """One coin + one uniform draw; returns (Z, phi, outcome dict).

    With probability a = (k2-k)/(k2-k1) the lambda1 openings seed Z,
    otherwise the selected lambda2 subset does; k-k1 leftover lambda2
    facilities are added uniformly. Clients follow the three-case rule.
    """
    k1, k2 = bracket.k1, bracket.k2
    if not k1 < k < k2:
        raise InputError(f"rounding needs k1 < k < k2, got {k1},{k},{k2}")
    a = (k2 - k) / (k2 - k1)
    rng = np.random.default_rng(np.random.SeedSequence(_entropy(seed)))
    choose_f1 = bool(rng.random() < a)
    residual = np.array(sorted(set(bracket.sol2.opened) - set(f2prime)),
                        dtype=np.int64)
    extra = rng.choice(residual, size=k - k1, replace=False)
    return assemble_rounding(bracket, f2prime, nn_map, k, choose_f1,
                             set(int(x) for x in extra))


def assemble_rounding(bracket, f2prime, nn_map, k, choose_f1: bool,
                      extra: set):
    """Deterministic assembly given the coin and the sampled extras."""
    base = sorted(bracket.sol1.opened) if choose_f1 else list(f2prime)
    z = sorted(set(base) | extra)
    if len(z) != k:
        raise PipelineError(f"rounded center set has size {len(z)} != {k}")
    f2p = set(int(x) for x in f2prime)
    a1 = bracket.sol1.assign
    a2 = bracket.sol2.assign
    nc = a1.shape[0]
    phi = np.empty(nc, dtype=np.int64)
    for c in range(nc):
        fc2 = int(a2[c])
        if fc2 in f2p:
            phi[c] = int(a1[c]) if choose_f1 else fc2
        elif fc2 in extra:
            phi[c] = fc2
        elif choose_f1:
            phi[c] = int(a1[c])
        else:
            phi[c] = int(nn_map[int(a1[c])])
    zset = set(z)
    if not all(int(p) in zset for p in phi):
        raise PipelineError("client mapped outside the center set")
    return np.array(z, dtype=np.int64), phi, {
        "choose_f1": choose_f1, "extra": sorted(extra)}


def evaluate_cost(points: PointSet, centers) -> float:
    """Exact clustering cost against centers given as coords or ids."""
    centers = np.asarray(centers)
    if centers.size == 0:
        raise InputError("centers must be nonempty")
    if centers.ndim == 1:
        coords = points.coords[centers.astype(np.int64)]
    else:
        coords = centers.astype(np.float64)
    d2 = cost_matrix(points, PointSet(coords))
    return float(d2.min(axis=1).sum())


def evaluate_cost_approx(graph: SpannerGraph, points: PointSet, center_ids,
                         epsilon: float, seed: int = 0):
    """Two-hop nearest-center distances summed by the sketch estimator.

    Returns (estimate, n_fallback): points whose two-hop view misses every
    center fall back to their true distance and are counted.
    """
    from .facility import two_hop_matrix
    from .runtime import mom_sum_estimate
    ids = np.asarray(sorted(int(c) for c in center_ids), dtype=np.int64)
    if ids.size == 0:
        raise InputError("centers must be nonempty")
    d2m = two_hop_matrix(graph)
    rows = d2m[:, ids]
    nn = rows.min(axis=1)
    bad = ~np.isfinite(nn)
    n_fallback = int(bad.sum())
    if n_fallback:
        true_d = np.sqrt(cost_matrix(points, PointSet(points.coords[ids]))
                         .min(axis=1))
        nn = np.where(bad, true_d, nn)
    est = mom_sum_estimate(nn ** 2, epsilon, seed)
    return float(est), n_fallback


def solve_kmeans(km: KMeansInstance, cfg: SolveConfig | None = None,
                 seed: int | None = None) -> KMeansSolution:
    """Normalize, bracket the opening cost, round to k centers, repeat.

    Repetitions share the bracket (the sweep is the expensive part) and
    draw independent coins; the cheapest exact-cost repetition wins.
    """
    cfg = cfg or SolveConfig(gamma=1.0)
    seed = cfg.seed if seed is None else seed
    pts, scale = _ensure_min_distance(km.points)
    if km.k == pts.n:
        led = RoundLedger()
        led.charge("trivial", 1)
        return KMeansSolution(
            km.k, np.arange(pts.n, dtype=np.int64),
            np.arange(pts.n, dtype=np.int64), 0.0, led, exact_hit=True,
            diagnostics={"normalize_scale": scale, "trivial_k_eq_n": True})
    kmn = KMeansInstance(pts, km.k)
    master = Runtime(ClusterConfig(n=max(2 * pts.n, 2), sigma=cfg.sigma,
                                   global_budget_epsilon=cfg.epsilon))
    # one metric graph shared by every sweep run and by the rounding
    from .runtime import CHARGE_SPANNER_BUILD
    master.ledger.charge("spanner", CHARGE_SPANNER_BUILD)
    if cfg.mode == "exact":
        from .spanner import exact_mode_spanner
        graph = exact_mode_spanner(pts)
    else:
        from .spanner import LshParams, build_spanner
        params = LshParams(repetitions=cfg.repetitions,
                           grid_cell=cfg.grid_cell,
                           gamma=max(1.25, cfg.gamma / 4.0),
                           rotation_seed=cfg.seed)
        graph = build_spanner(pts, cfg.epsilon, params)
    bracket, exact, sweep_ledger, trace = search_lambda(kmn, cfg, graph=graph)
    master.ledger.add_sequential(sweep_ledger)
    diag = {"normalize_scale": scale,
            "lambda_trace": list(zip(trace.lambdas, trace.opened_counts))}
    if exact is not None:
        centers = np.array(sorted(exact.opened), dtype=np.int64)
        cost = evaluate_cost(pts, centers)
        return KMeansSolution(km.k, centers, exact.assign.copy(), cost,
                              master.ledger, exact_hit=True,
                              bracket={"lambda": exact.lam,
                                       "k_opened": len(exact.opened)},
                              diagnostics=diag)
    ws = bracket.sol1.diagnostics["workspace"]
    f2prime, nn_map, delta, fallback = select_f2prime(
        bracket.sol1, bracket.sol2, ws)
    reps = max(1, math.ceil(C_REP * math.log2(max(pts.n, 2))))
    best = None
    reports = []
    rep_ledgers = []
    for r in range(reps):
        rt = Runtime(ClusterConfig(n=max(2 * pts.n, 2), sigma=cfg.sigma,
                                   global_budget_epsilon=cfg.epsilon))
        rt.ledger.charge("round_sample", CHARGE_BROADCAST + 1)
        z, phi, outcome = randomized_round(bracket, f2prime, nn_map, km.k,
                                           (seed, "rep", r))
        cost = evaluate_cost(pts, z)
        reports.append({"repetition": r, "cost": cost,
                        "choose_f1": outcome["choose_f1"]})
        rep_ledgers.append(rt.ledger)
        if best is None or cost < best[0]:
            best = (cost, z, phi)
    master.ledger.add_sequential(
        rep_ledgers[0].merge_parallel(rep_ledgers[1:]))
    master.ledger.charge("round_select", CHARGE_GROUP_AGGREGATE)
    cost, z, phi = best
    diag.update({"delta": delta, "nn_fallbacks": fallback,
                 "a": (bracket.k2 - km.k) / (bracket.k2 - bracket.k1)})
    return KMeansSolution(
        km.k, z, phi, cost, master.ledger,
        bracket={"lambda1": bracket.lambda1, "lambda2": bracket.lambda2,
                 "k1": bracket.k1, "k2": bracket.k2},
        repetition_reports=reports, diagnostics=diag)


# ---------------------------------------------------------------------------
# Dual-side checks used by the verification suites
# ---------------------------------------------------------------------------

def rescaled_dual_feasible(inst_lam1: FLInstance, alpha1: np.ndarray,
                           lambda2: float, rtol: float = 1e-9):
    """Scaling duals by lambda2/lambda1 keeps them feasible at lambda2."""
    d2 = cost_matrix(inst_lam1.clients, inst_lam1.facilities)
    bar = (lambda2 / inst_lam1.lam) * alpha1
    beta = np.maximum(bar[:, None] - d2, 0.0)
    payments = beta.sum(axis=0)
    return bool(np.all(payments <= lambda2 * (1 + rtol))), bar


def convex_combination_feasible(points: PointSet, k: int,
                                bracket: LambdaBracket,
                                alpha_bar1: np.ndarray, alpha2: np.ndarray,
                                rtol: float = 1e-9) -> dict:
    """Constraint-by-constraint check of the mixed primal/dual solution.

    Mixes the two bracket solutions with weights a, b; verifies primal
    cover/capacity rows, the center-count row, and dual payment rows at
    lambda2. Returns per-family booleans.
    """
    a = (bracket.k2 - k) / (bracket.k2 - bracket.k1)
    b = 1.0 - a
    n = points.n
    d2 = cost_matrix(points, points)
    x = np.zeros((n, n))
    y = np.zeros(n)
    for c in range(n):
        x[c, bracket.sol1.assign[c]] += a
        x[c, bracket.sol2.assign[c]] += b
    for f in bracket.sol1.opened:
        y[f] += a
    for f in bracket.sol2.opened:
        y[f] += b
    alpha = a * alpha_bar1 + b * alpha2
    beta = np.maximum(alpha[:, None] - d2, 0.0)
    lam2 = bracket.lambda2
    return {
        "cover": bool(np.all(x.sum(axis=1) >= 1 - rtol)),
        "open_capacity": bool(np.all(x <= y[None, :] + rtol)),
        "center_count": bool(y.sum() <= k + rtol),
        "dual_edge": bool(np.all(alpha[:, None] - beta <= d2 + rtol)),
        "dual_payment": bool(np.all(beta.sum(axis=0) <= lam2 * (1 + rtol))),
        "mix_cost": float((d2 * x).sum()),
        "dual_objective": float(alpha.sum() - lam2 * k),
    }


def _ensure_min_distance(points: PointSet):
    """Upscale so distinct points are >= 1 apart; never shrink a valid set.

    Shrinking an already-valid instance would collapse its separation
    hierarchy into the dependency-graph merge radius.
    """
    from .core import pairwise_extremes
    dmin, _ = pairwise_extremes(points)
    if dmin == 0.0:
        raise InputError("duplicate points")
    if dmin >= 1.0:
        return points, 1.0
    scale = 1.0 / dmin
    return PointSet(points.coords * scale), scale


def _entropy(seed):
    from .rulingsets import _as_entropy
    return _as_entropy(seed)
