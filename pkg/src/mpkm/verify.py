"""Property suites checking pipeline output against the sequential oracles.

Each suite returns a dict with at least {"name", "passed", ...counts...};
the CLI aggregates them into a report and the acceptance tests assert on
them directly. All comparisons are relative-tolerance 1e-9 unless a check
states otherwise.
"""

from __future__ import annotations

import math
import time

import numpy as np

from .constants import ConstantTable, make_constants
from .core import FLInstance, KMeansInstance, PointSet, cost_matrix, normalize
from .errors import PipelineError
from .facility import (FLSolution, SolveConfig, lmp_dual_oracle, solve_fl,
                       verify_lmp)
from .kmeans import evaluate_cost, solve_kmeans
from .oracles import (bruteforce_fl_opt, bruteforce_kmeans_opt,
                      exact_alpha_star, exact_radii, jv_sequential)

RTOL = 1e-9


def random_fl_instance(seed: int, max_n: int = 200, max_d: int = 8,
                       shared: bool | None = None) -> FLInstance:
    """Random normalized instance from a Gaussian mixture.

    Half the seeds use the reduction shape (facilities = clients = points);
    the rest split the points into overlapping facility/client sides.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    n = int(rng.integers(12, max_n + 1))
    d = int(rng.integers(2, max_d + 1))
    kc = int(rng.integers(2, 5))
    centers = rng.uniform(-24.0, 24.0, size=(kc, d))
    pts = centers[rng.integers(0, kc, size=n)] + rng.normal(0, 2.0, size=(n, d))
    pts = np.unique(np.round(pts, 6), axis=0)
    res = normalize(PointSet(pts))
    pts = res.points
    n = pts.n
    lam = float(rng.uniform(1.0, 4.0) * max(res.diameter, 2.0))
    if shared is None:
        shared = bool(seed % 2 == 0)
    if shared:
        return FLInstance(pts, pts, lam)
    mid = max(2, n * 2 // 3)
    fac = PointSet(pts.coords[:mid])
    cli = PointSet(pts.coords[n - mid:])
    return FLInstance(fac, cli, lam)


def planted_points(seed: int, n: int, groups: int, d: int = 3,
                   base_sep: float = 3.0e5, equal_sep: bool = False):
    """Separated groups of unit-spaced points; returns (PointSet, centers).

    With a geometric separation ladder (default) the facility count steps
    down one merge at a time over the opening-cost sweep; with equal
    separations (groups on a regular simplex) all merges flip in one
    octave, forcing the rounding path for targets strictly inside (1, g).
    Separations sit beyond the dependency-graph merge radius, which is
    what makes multi-facility solutions resolvable at desk scale.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    g = max(2, min(groups, n))
    if equal_sep:
        d = max(d, g)  # regular simplex needs one axis per group
    sizes = np.full(g, n // g)
    sizes[: n - int(sizes.sum())] += 1
    rows = []
    centers = []
    for gi in range(g):
        center = np.zeros(d)
        if equal_sep:
            center[gi] = base_sep
        else:
            center[gi % d] = base_sep * (3.0 ** gi)
            center[(gi + 1) % d] = 0.25 * base_sep * (gi + 1)
        centers.append(center)
        for j in range(int(sizes[gi])):
            offset = np.zeros(d)
            offset[0] = 1.7 * j
            jitter = rng.uniform(-0.2, 0.2, size=d)
            rows.append(center + offset + jitter)
    return PointSet(np.vstack(rows)), np.vstack(centers)


def planted_kmeans_instance(seed: int, n: int = 14, k: int = 3, d: int = 3,
                            groups: int | None = None,
                            base_sep: float = 3.0e5,
                            equal_sep: bool = False) -> KMeansInstance:
    g = groups if groups is not None else min(k + 1, n // 2)
    pts, _ = planted_points(seed, n, g, d, base_sep, equal_sep)
    return KMeansInstance(pts, k)


def paid_mask(inst: FLInstance, alpha: np.ndarray, scale: float = 1.0):
    """Facilities with sum_c [scale*alpha_c - cost]^+ >= lambda (1e-9 rel)."""
    d2 = cost_matrix(inst.clients, inst.facilities)
    sums = np.maximum(scale * alpha[:, None] - d2, 0.0).sum(axis=0)
    return sums >= inst.lam * (1.0 - RTOL), sums


def check_sandwiches(inst: FLInstance, sol: FLSolution,
                     ct: ConstantTable) -> dict:
    """Radius and dual-seed quantization sandwiches against the oracles."""
    r_exact = exact_radii(inst)
    a_star = exact_alpha_star(inst, r_exact)
    rh = sol.duals.radii_hat
    ok_r = bool(np.all(rh <= r_exact * (1 + RTOL))
                and np.all(rh >= r_exact / ct.c_r * (1 - RTOL)))
    a0 = sol.duals.alpha0
    ok_a = bool(np.all(a0 >= a_star / ct.c_d_plus * (1 - RTOL))
                and np.all(a0 <= a_star / ct.c_d_minus * (1 + RTOL)))
    flags = sol.duals.problematic
    d2cc = cost_matrix(inst.clients, inst.clients)
    must = np.any((np.sqrt(d2cc) <= ct.gamma1 * np.sqrt(a_star)[:, None])
                  & (a0[None, :] <= a0[:, None] / ct.q), axis=1)
    may = np.any((np.sqrt(d2cc) <= ct.gamma2 * np.sqrt(a_star)[:, None])
                 & (a0[None, :] <= a0[:, None] / ct.q), axis=1)
    ok_flags = bool(np.all(~must | flags) and np.all(~flags | may))
    return {"name": "sandwich", "passed": ok_r and ok_a and ok_flags,
            "radius_ok": ok_r, "alpha_ok": ok_a, "flags_ok": ok_flags,
            "n_facilities": inst.facilities.n, "n_clients": inst.clients.n}


def check_lemmas(inst: FLInstance, sol: FLSolution, ct: ConstantTable) -> dict:
    """Existence, contributor-radius, shared-contributor, paid-set, and
    no-overpayment properties on one solved instance."""
    d2 = cost_matrix(inst.clients, inst.facilities)
    r_exact = exact_radii(inst)
    a0, a1 = sol.duals.alpha0, sol.duals.alpha1
    lam = inst.lam

    is_paid, _ = paid_mask(inst, a1)
    targets = np.maximum(r_exact[None, :] ** 2, d2)
    feasible = targets <= (ct.eta * a0[:, None]) * (1 + RTOL)
    exist_ok = bool(np.all((feasible & is_paid[None, :]).any(axis=1)))

    contrib = ct.kappa * a1[:, None] > d2
    bound = ct.rho * r_exact[None, :] ** 2 * (1 + RTOL)
    l43_ok = bool(np.all(~contrib | (a1[:, None] <= bound)))

    l44_ok = True
    worst_ratio = 0.0
    fac_pairs = contrib.astype(np.float64).T @ contrib.astype(np.float64)
    shared = np.argwhere(np.triu(fac_pairs, k=1) > 0)
    dff = cost_matrix(inst.facilities, inst.facilities)
    for f, g in shared:
        rmin, rmax = sorted((r_exact[f], r_exact[g]))
        worst_ratio = max(worst_ratio, rmax / rmin)
        if rmax > ct.zeta * rmin * (1 + RTOL):
            l44_ok = False
        if math.sqrt(dff[f, g]) >= (ct.zeta / 2.0) * rmin * (1 + RTOL):
            l44_ok = False

    kappa_paid, _ = paid_mask(inst, a1, scale=ct.kappa)
    s_mask = np.zeros(inst.facilities.n, dtype=bool)
    s_mask[sol.paid_set] = True
    step4_ok = bool(np.all(~is_paid | s_mask) and np.all(~s_mask | kappa_paid))

    over = np.maximum(a0[:, None] - d2, 0.0).sum(axis=0)
    noover_ok = bool(np.all(over < lam))  # strict; margin is ~lambda/(2*g^2)

    passed = exist_ok and l43_ok and l44_ok and step4_ok and noover_ok
    return {"name": "lemmas", "passed": passed, "exist_ok": exist_ok,
            "contrib_radius_ok": l43_ok, "shared_contrib_ok": l44_ok,
            "paid_set_ok": step4_ok, "no_overpayment_ok": noover_ok,
            "worst_radius_ratio": worst_ratio}


def check_certificate(inst: FLInstance, sol: FLSolution,
                      ct: ConstantTable) -> dict:
    cert = lmp_dual_oracle(inst, sol.duals, sol.paid_set,
                           sol.clusters.centers, ct)
    rep = verify_lmp(inst, sol, cert, ct)
    out = rep.as_dict()
    out.update({"name": "dual_certificate", "passed": rep.ok})
    return out


def suite_sandwich(n_instances=25, max_n=200, max_d=8, gamma=5.0,
                   seed0=1000) -> dict:
    t0 = time.time()
    cfg = SolveConfig(mode="exact", gamma=gamma)
    ct = cfg.table()
    results = []
    for i in range(n_instances):
        inst = random_fl_instance(seed0 + i, max_n, max_d)
        sol = solve_fl(inst, cfg)
        results.append(check_sandwiches(inst, sol, ct))
    return {"name": "sandwich", "passed": all(r["passed"] for r in results),
            "instances": len(results), "elapsed_s": time.time() - t0,
            "failures": [r for r in results if not r["passed"]]}


def suite_lemmas(n_instances=25, max_n=200, max_d=8, gamma=5.0,
                 seed0=1000) -> dict:
    cfg = SolveConfig(mode="exact", gamma=gamma)
    ct = cfg.table()
    results = []
    for i in range(n_instances):
        inst = random_fl_instance(seed0 + i, max_n, max_d)
        sol = solve_fl(inst, cfg)
        results.append(check_lemmas(inst, sol, ct))
    return {"name": "lemmas", "passed": all(r["passed"] for r in results),
            "instances": len(results),
            "failures": [r for r in results if not r["passed"]]}


def suite_dual(n_instances=25, max_n=200, max_d=8, gamma=5.0,
               seed0=1000) -> dict:
    cfg = SolveConfig(mode="exact", gamma=gamma)
    ct = cfg.table()
    results = []
    for i in range(n_instances):
        inst = random_fl_instance(seed0 + i, max_n, max_d)
        sol = solve_fl(inst, cfg)
        results.append(check_certificate(inst, sol, ct))
    return {"name": "dual", "passed": all(r["passed"] for r in results),
            "instances": len(results),
            "failures": [r for r in results if not r["passed"]]}


def suite_jv(n_instances=10, max_n=40, gamma=5.0, seed0=3000) -> dict:
    """The baseline's dual feasibility and its factor-9 inequality."""
    results = []
    for i in range(n_instances):
        inst = random_fl_instance(seed0 + i, max_n, 6)
        jv = jv_sequential(inst)
        payments = jv.beta.sum(axis=0)
        feasible = bool(np.all(payments <= inst.lam * (1 + RTOL)))
        surplus = float(jv.alpha.sum() - len(jv.opened) * inst.lam)
        lmp9 = bool(jv.connection_cost <= 9.0 * surplus * (1 + RTOL) + 1e-9)
        results.append({"feasible": feasible, "lmp9": lmp9,
                        "passed": feasible and lmp9})
    return {"name": "jv", "passed": all(r["passed"] for r in results),
            "instances": len(results),
            "failures": [r for r in results if not r["passed"]]}


def measure_lmp_ratio(inst: FLInstance, cfg: SolveConfig):
    """Solve, certify, and compare against the enumerated optimum.

    Returns (solution, OPT, connection_cost/(OPT - |opened|*lambda), report).
    """
    sol = solve_fl(inst, cfg)
    ct = cfg.table()
    cert = lmp_dual_oracle(inst, sol.duals, sol.paid_set,
                           sol.clusters.centers, ct)
    rep = verify_lmp(inst, sol, cert, ct)
    opt, _ = bruteforce_fl_opt(inst)
    surplus = opt - len(sol.opened) * inst.lam
    ratio = sol.connection_cost / surplus if surplus > 1e-12 else (
        0.0 if sol.connection_cost <= 1e-9 else math.inf)
    return sol, opt, ratio, rep


def suite_kmeans(n_instances=10, gamma=1.0, seed0=5000,
                 ratio_cap=10.0) -> dict:
    """Feasibility and oracle ratio on planted instances; odd indices use
    equal separations so the bracketing/rounding path is exercised."""
    cfg = SolveConfig(mode="exact", gamma=gamma)
    results = []
    for i in range(n_instances):
        km = planted_kmeans_instance(seed0 + i, n=12 + (i % 5), k=2 + (i % 3),
                                     groups=4 + (i % 2),
                                     equal_sep=bool(i % 2))
        sol = solve_kmeans(km, cfg, seed=seed0 + i)
        opt, _ = bruteforce_kmeans_opt(km)
        ratio = sol.total_cost / opt if opt > 1e-12 else (
            1.0 if sol.total_cost <= 1e-9 else math.inf)
        ok = (sol.centers.size == km.k and ratio <= ratio_cap)
        results.append({"n": km.points.n, "k": km.k, "cost": sol.total_cost,
                        "opt": opt, "ratio": ratio, "passed": bool(ok),
                        "exact_hit": sol.exact_hit})
    return {"name": "kmeans", "passed": all(r["passed"] for r in results),
            "instances": len(results), "results": results}


def spanner_coverage_stats(points: PointSet, graph, n_pairs=10000, seed=0):
    """Two-hop connection-form miss rate and the distance certificate.

    A sampled pair misses when there is neither a direct edge of weight
    <= dist/2 nor a <=2-hop connection of total weight <= dist; the
    certificate side checks dist <= gamma_eff * two-hop weight on hits.
    """
    from .facility import two_hop_matrix
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    n = points.n
    d2m = two_hop_matrix(graph)
    adj = graph.adjacency()
    ii = rng.integers(0, n, size=n_pairs)
    jj = rng.integers(0, n, size=n_pairs)
    keep = ii != jj
    ii, jj = ii[keep], jj[keep]
    diff = points.coords[ii] - points.coords[jj]
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    misses = 0
    cert_viol = 0
    for a, b, dv in zip(ii, jj, dist):
        direct = adj[int(a)].get(int(b))
        two = d2m[int(a), int(b)]
        hit = (direct is not None and direct <= dv / 2 + 1e-12) or \
              (np.isfinite(two) and two <= dv + 1e-12)
        if not hit:
            misses += 1
        if np.isfinite(two) and dv > graph.gamma_eff * two * (1 + 1e-9):
            cert_viol += 1
    return {"pairs": int(ii.size), "misses": int(misses),
            "miss_rate": misses / max(int(ii.size), 1),
            "certificate_violations": int(cert_viol)}


SUITES = {
    "sandwich": suite_sandwich,
    "lemmas": suite_lemmas,
    "dual": suite_dual,
    "jv": suite_jv,
    "kmeans": suite_kmeans,
}
