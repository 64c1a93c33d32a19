import math

import numpy as np
import pytest

from mpkm.constants import make_constants
from mpkm.core import FLInstance, PointSet, cost_matrix
from mpkm.errors import PipelineError
from mpkm.facility import (SolveConfig, Workspace, certified_solution,
                           lmp_dual_oracle, solve_fl, step1_radii,
                           step2_alpha0, step3_problematic, step4_paid,
                           verify_lmp)
from mpkm.oracles import exact_alpha_star, exact_radii
from mpkm.runtime import ClusterConfig, Runtime
from mpkm.spanner import exact_mode_spanner
from mpkm.verify import (check_certificate, check_lemmas, check_sandwiches,
                         paid_mask, random_fl_instance)

THEORY = SolveConfig(mode="exact", gamma=5.0)
PRACTICAL = SolveConfig(mode="exact", gamma=1.0)


def make_ws(inst, cfg=THEORY):
    rt = Runtime(ClusterConfig(n=max(inst.facilities.n + inst.clients.n, 4)))
    return Workspace(inst, cfg, rt)


def shared_instance(coords, lam):
    pts = PointSet(np.asarray(coords, dtype=np.float64))
    return FLInstance(pts, pts, lam)


# --- step I ----------------------------------------------------------------

def test_step1_colocated_client():
    fac = PointSet(np.array([[0.0]]))
    cli = PointSet(np.array([[0.0]]))
    inst = FLInstance(fac, cli, 4.0)
    ws = make_ws(inst)
    r_hat = step1_radii(ws)
    r = exact_radii(inst)
    assert r[0] == pytest.approx(2.0)
    ct = THEORY.table()
    assert r[0] / ct.c_r - 1e-12 <= r_hat[0] <= r[0] + 1e-12


def test_step1_two_costs():
    fac = PointSet(np.array([[0.0]]))
    cli = PointSet(np.array([[0.0], [1.0]]))
    inst = FLInstance(fac, cli, 4.0)
    ws = make_ws(inst)
    r_hat = step1_radii(ws)
    r = exact_radii(inst)
    assert r[0] == pytest.approx(math.sqrt(2.5), rel=1e-12)
    ct = THEORY.table()
    assert r[0] / ct.c_r <= r_hat[0] <= r[0]


def test_step1_count_scale_growth():
    # identical cluster of unit-spaced clients, large lambda: the chosen
    # scale grows with the largest level satisfying count * 4^l <= lambda
    coords = np.arange(6, dtype=np.float64)[:, None]
    inst = shared_instance(coords, 400.0)
    ws = make_ws(inst)
    r_hat = step1_radii(ws)
    for lam2 in (1600.0, 6400.0):
        ws2 = make_ws(shared_instance(coords, lam2))
        r2 = step1_radii(ws2)
        assert np.all(r2 >= r_hat)
        r_hat = r2


def test_step1_sandwich_random():
    for seed in range(1100, 1105):
        inst = random_fl_instance(seed, max_n=80)
        ws = make_ws(inst)
        r_hat = step1_radii(ws)
        r = exact_radii(inst)
        ct = THEORY.table()
        assert np.all(r_hat <= r * (1 + 1e-9))
        assert np.all(r_hat >= r / ct.c_r * (1 - 1e-9))


# --- step II ---------------------------------------------------------------

def test_step2_single_far_facility():
    fac = PointSet(np.array([[5.0]]))
    cli = PointSet(np.array([[0.0]]))
    inst = FLInstance(fac, cli, 4.0)
    r = exact_radii(inst)
    a_star = exact_alpha_star(inst, r)
    assert a_star[0] == pytest.approx(max(r[0] ** 2, 25.0))
    ws = make_ws(inst)
    a0 = step2_alpha0(ws, r)
    ct = THEORY.table()
    assert a_star[0] / ct.c_d_plus * (1 - 1e-9) <= a0[0] \
        <= a_star[0] / ct.c_d_minus * (1 + 1e-9)


def test_step2_colocated_unit_radius():
    inst = shared_instance([[0.0], [1.5]], 1.0)
    r = exact_radii(inst)
    a_star = exact_alpha_star(inst, r)
    assert a_star[0] == pytest.approx(r[0] ** 2)
    ws = make_ws(inst)
    a0 = step2_alpha0(ws, r)
    ct = THEORY.table()
    assert np.all(a0 >= a_star / ct.c_d_plus * (1 - 1e-9))
    assert np.all(a0 <= a_star / ct.c_d_minus * (1 + 1e-9))


def test_step2_sandwich_random_n40():
    inst = random_fl_instance(1200, max_n=40)
    r = exact_radii(inst)
    ws = make_ws(inst)
    a0 = step2_alpha0(ws, r)
    a_star = exact_alpha_star(inst, r)
    ct = THEORY.table()
    assert np.all(a0 >= a_star / ct.c_d_plus * (1 - 1e-9))
    assert np.all(a0 <= a_star / ct.c_d_minus * (1 + 1e-9))


# --- step III --------------------------------------------------------------

def test_step3_uniform_no_flags():
    coords = np.arange(8, dtype=np.float64)[:, None] * 2.0
    inst = shared_instance(coords, 3.0)
    ws = make_ws(inst)
    r = exact_radii(inst)
    a0 = step2_alpha0(ws, r)
    a_star = exact_alpha_star(inst, r)
    flags, a1 = step3_problematic(ws, a0, a_star)
    assert not flags.any()
    assert np.allclose(a1, THEORY.table().c_a * a0)


def test_step3_planted_gap_flagged():
    # lone client far from every facility: its dual optimum dwarfs the
    # blob clients', and a blob client inside the must-flag ball has the
    # required Q-factor gap
    blob = np.arange(10, dtype=np.float64)[:, None]
    fac = PointSet(blob)
    cli = PointSet(np.vstack([blob, [[5.0e4]]]))
    inst = FLInstance(fac, cli, 2.0)
    ws = make_ws(inst)
    r = exact_radii(inst)
    a0 = step2_alpha0(ws, r)
    a_star = exact_alpha_star(inst, r)
    flags, a1 = step3_problematic(ws, a0, a_star)
    ct = THEORY.table()
    # reference implementation over exact balls
    ccoords = cli.coords
    d = np.abs(ccoords[:, None, 0] - ccoords[None, :, 0])
    must = ((d <= ct.gamma1 * np.sqrt(a_star)[:, None])
            & (a0[None, :] <= a0[:, None] / ct.q)).any(axis=1)
    assert must.any()
    assert np.all(~must | flags)
    assert np.all(np.where(flags, a1 == a0, a1 == ct.c_a * a0))


def test_step3_isolated_far_client_unflagged():
    coords = np.array([[0.0], [1.0e7]])
    inst = shared_instance(coords, 1.0)
    ws = make_ws(inst)
    r = exact_radii(inst)
    a0 = step2_alpha0(ws, r)
    a_star = exact_alpha_star(inst, r)
    flags, _ = step3_problematic(ws, a0, a_star)
    assert not flags[1]


# --- step IV ---------------------------------------------------------------

def run_through_step4(inst, cfg=THEORY):
    ws = make_ws(inst, cfg)
    from mpkm.facility import DualState
    r_hat = step1_radii(ws)
    r = exact_radii(inst)
    a0 = step2_alpha0(ws, r)
    a_star = exact_alpha_star(inst, r)
    flags, a1 = step3_problematic(ws, a0, a_star)
    duals = DualState(a0, a1, flags, r_hat, r)
    return ws, duals, step4_paid(ws, duals)


def test_step4_nearby_clients_pay():
    # several clients close to facility 0; their amplified duals pay for it
    coords = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    inst = shared_instance(coords, 1.5)
    ws, duals, paid = run_through_step4(inst)
    is_paid, sums = paid_mask(inst, duals.alpha1)
    assert is_paid.any()
    assert set(np.flatnonzero(is_paid)) <= set(paid.tolist())


def test_step4_set_sandwich_random():
    ct = THEORY.table()
    for seed in range(1300, 1306):
        inst = random_fl_instance(seed, max_n=60)
        ws, duals, paid = run_through_step4(inst)
        is_paid, _ = paid_mask(inst, duals.alpha1)
        kappa_paid, _ = paid_mask(inst, duals.alpha1, scale=ct.kappa)
        s_mask = np.zeros(inst.facilities.n, dtype=bool)
        s_mask[paid] = True
        assert np.all(~is_paid | s_mask)      # paid subset of S
        assert np.all(~s_mask | kappa_paid)   # S subset of kappa-paid


def test_step4_unpaid_excluded():
    # far lone facility with no nearby clients never enters S
    fac = PointSet(np.array([[0.0], [1.0e8]]))
    cli = PointSet(np.array([[0.0], [1.0]]))
    inst = FLInstance(fac, cli, 2.0)
    ws, duals, paid = run_through_step4(inst)
    assert 1 not in set(paid.tolist())


# --- step V + VI + VII through solve --------------------------------------

def hbase_square_pairs(dep):
    adj = {}
    for u, v in dep.edges:
        adj.setdefault(u, set()).add(v)
        adj.setdefault(v, set()).add(u)
    pairs = set(dep.edges)
    for z, nbrs in adj.items():
        for a in nbrs:
            for b in nbrs:
                if a < b:
                    pairs.add((a, b))
    return pairs


def test_step5_contract_random():
    from mpkm.facility import bruteforce_dependency_edges, step5_dependency
    ct = THEORY.table()
    for seed in range(1400, 1405):
        inst = random_fl_instance(seed, max_n=60)
        ws, duals, paid = run_through_step4(inst)
        dep = step5_dependency(ws, paid, duals.radii_hat)
        # brute-force dependency edges must appear within 2 hops
        h = bruteforce_dependency_edges(inst, duals, paid, ct.kappa)
        sq = hbase_square_pairs(dep)
        for f, nbrs in h.items():
            for g in nbrs:
                if f < g:
                    assert (f, g) in sq, (seed, f, g)
        # radius-ratio and distance contracts on every square edge
        r = exact_radii(inst)
        dff = np.sqrt(cost_matrix(inst.facilities, inst.facilities))
        for f, g in sq:
            rmin, rmax = sorted((r[f], r[g]))
            assert rmax <= ct.c_h1 * rmin * (1 + 1e-9)
            assert dff[f, g] <= ct.c_h2 * rmin * (1 + 1e-9)


def test_step5_singleton_empty():
    from mpkm.facility import step5_dependency
    inst = shared_instance([[0.0], [1.0e7]], 1.0)
    ws, duals, paid = run_through_step4(inst)
    dep = step5_dependency(ws, paid, duals.radii_hat)
    if paid.size == 1:
        assert not dep.edges


def test_step6_single_paid_single_cluster():
    inst = shared_instance([[0.0], [1.0]], 1.5)
    sol = solve_fl(inst, THEORY)
    assert len(sol.opened) == 1
    assert sol.clusters.centers.size == 1


def test_step6_separated_components_get_centers():
    # two blobs far beyond every dependency threshold: one center each
    blob1 = np.arange(3, dtype=np.float64)[:, None] * 1.5
    blob2 = blob1 + 1.0e9
    inst = shared_instance(np.vstack([blob1, blob2]), 2.0)
    sol = solve_fl(inst, PRACTICAL)
    assert sol.clusters.centers.size == 2
    assert len(sol.opened) == 2


def test_step6_center_separation_in_bruteforce_h():
    from mpkm.facility import bruteforce_dependency_edges
    ct = THEORY.table()
    for seed in range(1500, 1505):
        inst = random_fl_instance(seed, max_n=60)
        sol = solve_fl(inst, THEORY)
        h = bruteforce_dependency_edges(inst, sol.duals, sol.paid_set,
                                        ct.kappa)
        centers = sol.clusters.centers
        # BFS in H from each center: no other center within distance 3
        for c in centers:
            frontier = {int(c)}
            seen = {int(c)}
            for _ in range(3):
                nxt = set()
                for u in frontier:
                    nxt |= set(h.get(u, ()))
                nxt -= seen
                seen |= nxt
                frontier = nxt
            assert not (seen - {int(c)}) & set(int(x) for x in centers)


def test_step7_centroid_pick():
    fac = PointSet(np.array([[0.0], [1.0], [2.0]]))
    cli = PointSet(np.array([[0.0], [2.0]]))
    inst = FLInstance(fac, cli, 50.0)
    sol = solve_fl(inst, THEORY)
    assert sol.opened == [1]
    assert sol.connection_cost == pytest.approx(2.0)


def test_step7_tie_lowest_id():
    fac = PointSet(np.array([[0.0], [2.0]]))
    cli = PointSet(np.array([[0.0], [2.0]]))
    inst = FLInstance(fac, cli, 50.0)
    sol = solve_fl(inst, THEORY)
    assert sol.opened == [0]


def test_step7_exact_minimizer_per_cluster():
    for seed in range(1600, 1604):
        inst = random_fl_instance(seed, max_n=50)
        sol = solve_fl(inst, THEORY)
        d2 = cost_matrix(inst.clients, inst.facilities)
        # within each cluster, the opened facility minimizes the summed
        # cost over that cluster's facilities for its clients
        cof = sol.clusters.center_of_facility
        for opened in sol.opened:
            ctr = cof[opened]
            members = [c for c in range(inst.clients.n)
                       if cof[int(sol.clusters.f_c[c])] == ctr]
            cluster_fac = [f for f, cc in cof.items() if cc == ctr]
            best = min(cluster_fac,
                       key=lambda f: (d2[members, f].sum(), f))
            assert d2[members, opened].sum() \
                == pytest.approx(d2[members, best].sum(), rel=1e-12)


# --- solve_fl end-to-end ---------------------------------------------------

def test_solve_fl_huge_lambda_single_open():
    inst = random_fl_instance(1700, max_n=50, shared=True)
    big = FLInstance(inst.facilities, inst.clients,
                     4.0 * inst.clients.n * 1e6)
    sol = solve_fl(big, PRACTICAL)
    assert len(sol.opened) == 1


def test_solve_fl_lambda_one_spread_opens_all():
    # pairwise separations beyond every dependency threshold at gamma=1
    coords = (np.arange(6, dtype=np.float64)[:, None]) * 5.0e5
    inst = shared_instance(coords, 1.0)
    sol = solve_fl(inst, PRACTICAL)
    assert sorted(sol.opened) == list(range(6))


def test_solve_fl_two_clusters_practical():
    blob = np.array([[0.0], [1.3], [2.6], [4.0]])
    coords = np.vstack([blob, blob + 2.0e6])
    inst = shared_instance(coords, 4.0)
    sol = solve_fl(inst, PRACTICAL)
    opened = np.array(sol.opened)
    assert np.any(opened < 4) and np.any(opened >= 4)
    # feasibility: every client assigned to an opened facility
    assert set(sol.assign.tolist()) <= set(sol.opened)


def test_solve_fl_ledger_deterministic():
    inst = random_fl_instance(1800, max_n=40)
    s1 = solve_fl(inst, THEORY)
    s2 = solve_fl(inst, THEORY)
    assert s1.ledger.as_dict() == s2.ledger.as_dict()
    assert s1.opened == s2.opened


# --- certificates ----------------------------------------------------------

def test_xi_zero_boundary():
    from mpkm.facility import _xi_root
    # already paid at xi=0
    a = np.array([5.0])
    b = np.array([3.0])
    costs = np.array([1.0])
    assert _xi_root(a, b, costs, 0.0, 4.0) == 0.0


def test_xi_one_hinge_closed_form():
    # single client, single facility: alpha0 + xi*(k*alpha1 - alpha0) =
    # lambda + cost solves exactly
    a0, ka1, c, lam = 2.0, 11.0, 3.0, 4.0
    from mpkm.facility import _xi_root
    xi = _xi_root(np.array([a0]), np.array([ka1 - a0]), np.array([c]),
                  0.0, lam)
    assert xi == pytest.approx((lam + c - a0) / (ka1 - a0), rel=1e-12)


def test_certificate_payments_exact():
    for seed in range(1900, 1906):
        inst = random_fl_instance(seed, max_n=60)
        sol, cert, rep = certified_solution(inst, THEORY)
        assert rep.ok, (seed, rep.as_dict())
        payments = cert.beta.sum(axis=0)
        for f in set(cert.opened):
            assert payments[f] == pytest.approx(inst.lam, rel=1e-9)


def test_certificate_corruption_detected():
    inst = random_fl_instance(2000, max_n=40)
    sol, cert, rep = certified_solution(inst, THEORY)
    assert rep.ok
    cert.beta[0, :] += 0.5  # hand-corrupted contribution row
    bad = verify_lmp(inst, sol, cert, THEORY.table())
    assert not bad.hinge_consistent
    assert not bad.ok


def test_lemma_suite_instances():
    ct = THEORY.table()
    for seed in range(2100, 2105):
        inst = random_fl_instance(seed, max_n=70)
        sol = solve_fl(inst, THEORY)
        assert check_sandwiches(inst, sol, ct)["passed"]
        assert check_lemmas(inst, sol, ct)["passed"]
        assert check_certificate(inst, sol, ct)["passed"]
