import itertools
import math

import numpy as np
import pytest

from mpkm.core import (FLInstance, KMeansInstance, PointSet, cost_matrix,
                       normalize)
from mpkm.errors import InputError
from mpkm.facility import SolveConfig, Workspace, lmp_dual_oracle, solve_fl
from mpkm.kmeans import (LambdaBracket, assemble_rounding,
                         convex_combination_feasible, evaluate_cost,
                         evaluate_cost_approx, randomized_round,
                         rescaled_dual_feasible, search_lambda,
                         select_f2prime, solve_kmeans)
from mpkm.oracles import bruteforce_kmeans_opt
from mpkm.runtime import ClusterConfig, Runtime
from mpkm.verify import planted_kmeans_instance

PRACTICAL = SolveConfig(mode="exact", gamma=1.0)


def spread_points(n, sep=5.0e5):
    return PointSet(np.arange(n, dtype=np.float64)[:, None] * sep)


def bracketed_instance(n=13, k=3, groups=5, seed=5001):
    km = planted_kmeans_instance(seed, n=n, k=k, groups=groups,
                                 equal_sep=True)
    bracket, exact, _, _ = search_lambda(km, PRACTICAL)
    assert exact is None
    return km, bracket


# --- search_lambda ---------------------------------------------------------

def test_search_lambda_k_equals_n_spread():
    # pairwise separations beyond the dependency merge radius: the unit
    # opening cost opens every facility and k = n is an exact hit
    km = KMeansInstance(spread_points(5), 5)
    bracket, exact, ledger, trace = search_lambda(km, PRACTICAL)
    assert exact is not None
    assert len(exact.opened) == 5
    assert trace.opened_counts[0] == 5


def test_search_lambda_k_one():
    km = planted_kmeans_instance(42, n=12, k=1, groups=3)
    bracket, exact, ledger, trace = search_lambda(km, PRACTICAL)
    assert exact is not None
    assert len(exact.opened) == 1
    # the largest opening cost opens a single facility
    assert trace.opened_counts[-1] == 1


def test_search_lambda_bracket_pinned():
    km, bracket = bracketed_instance()
    assert bracket.k1 <= 3 <= bracket.k2
    assert bracket.lambda2 <= bracket.lambda1 <= 2 * bracket.lambda2
    bracket.validate(3)


def test_search_lambda_parallel_ledger():
    km = planted_kmeans_instance(77, n=10, k=2, groups=3)
    _, _, ledger, trace = search_lambda(km, PRACTICAL)
    # merged as parallel runs: rounds equal one run's rounds, not the sum
    single = solve_fl(FLInstance(km.points, km.points, trace.lambdas[0]),
                      PRACTICAL)
    assert ledger.rounds_by_phase["step1_radii"] \
        == single.ledger.rounds_by_phase["step1_radii"]


# --- select_f2prime --------------------------------------------------------

def test_f2prime_self_map_when_subset():
    km, bracket = bracketed_instance()
    ws = bracket.sol1.diagnostics["workspace"]
    f2p, nn_map, delta, fallback = select_f2prime(
        bracket.sol1, bracket.sol2, ws)
    common = set(bracket.sol1.opened) & set(bracket.sol2.opened)
    for f in common:
        assert nn_map[f] == f
    assert len(f2p) == bracket.k1
    assert set(f2p) <= set(bracket.sol2.opened)


def test_f2prime_exact_mode_true_nn():
    km, bracket = bracketed_instance()
    ws = bracket.sol1.diagnostics["workspace"]
    f2p, nn_map, delta, _ = select_f2prime(bracket.sol1, bracket.sol2, ws)
    pts = km.points.coords
    f2 = sorted(bracket.sol2.opened)
    for f, g in nn_map.items():
        best = min(f2, key=lambda h: (np.sum((pts[f] - pts[h]) ** 2), h))
        assert g == best
    assert delta == 1.0


def test_f2prime_padding_fills_lowest_ids():
    # synthetic bracket where both lambda1 openings share one neighbor
    pts = PointSet(np.array([[0.0], [1.5], [3.0e6], [6.0e6], [9.0e6]]))

    class Dummy:
        pass

    sol1 = Dummy()
    sol2 = Dummy()
    sol1.opened = [0, 1]
    sol2.opened = [0, 2, 3, 4]
    inst = FLInstance(pts, pts, 1.0)
    rt = Runtime(ClusterConfig(n=10))
    ws = Workspace(inst, PRACTICAL, rt)
    f2p, nn_map, _, _ = select_f2prime(sol1, sol2, ws)
    assert nn_map[0] == 0 and nn_map[1] == 0
    assert f2p == [0, 2]  # padded with the lowest residual id


# --- randomized rounding ---------------------------------------------------

def test_rounding_requires_strict_bracket():
    km, bracket = bracketed_instance()
    with pytest.raises(InputError):
        randomized_round(bracket, [], {}, bracket.k1, seed=0)


def test_rounding_formulas():
    km, bracket = bracketed_instance()
    k = 3
    a = (bracket.k2 - k) / (bracket.k2 - bracket.k1)
    b = (k - bracket.k1) / (bracket.k2 - bracket.k1)
    assert a + b == pytest.approx(1.0)
    assert a * bracket.k1 + b * bracket.k2 == pytest.approx(k)


def test_rounding_size_and_membership():
    km, bracket = bracketed_instance()
    ws = bracket.sol1.diagnostics["workspace"]
    f2p, nn_map, _, _ = select_f2prime(bracket.sol1, bracket.sol2, ws)
    for seed in range(30):
        z, phi, outcome = randomized_round(bracket, f2p, nn_map, 3, seed)
        assert z.size == 3
        assert set(phi.tolist()) <= set(z.tolist())


def test_rounding_exhaustive_marginals():
    """Enumerate every coin outcome; check P[F1] = a and per-residual
    inclusion b exactly, and the expected-cost identity for clients whose
    second assignment survives in the selected subset."""
    km, bracket = bracketed_instance()
    ws = bracket.sol1.diagnostics["workspace"]
    f2p, nn_map, _, _ = select_f2prime(bracket.sol1, bracket.sol2, ws)
    k = 3
    k1, k2 = bracket.k1, bracket.k2
    a = (k2 - k) / (k2 - k1)
    b = (k - k1) / (k2 - k1)
    residual = sorted(set(bracket.sol2.opened) - set(f2p))
    assert len(residual) == k2 - k1
    combos = list(itertools.combinations(residual, k - k1))
    p_f1 = 0.0
    incl = {f: 0.0 for f in residual}
    exp_cost = np.zeros(km.points.n)
    d2 = cost_matrix(km.points, km.points)
    for choose_f1, w_coin in ((True, a), (False, 1.0 - a)):
        for combo in combos:
            w = w_coin / len(combos)
            z, phi, _ = assemble_rounding(bracket, f2p, nn_map, k,
                                          choose_f1, set(combo))
            if choose_f1:
                p_f1 += w
            for f in combo:
                incl[f] += w
            exp_cost += w * d2[np.arange(km.points.n), phi]
    assert p_f1 == pytest.approx(a, rel=1e-12)
    for f in residual:
        assert incl[f] == pytest.approx(b, rel=1e-12)
    # expected-cost identity for clients with second assignment in f2prime
    for c in range(km.points.n):
        if int(bracket.sol2.assign[c]) in set(f2p):
            want = a * d2[c, bracket.sol1.assign[c]] \
                + (1 - a) * d2[c, bracket.sol2.assign[c]]
            assert exp_cost[c] == pytest.approx(want, rel=1e-12)


# --- cost evaluation -------------------------------------------------------

def test_evaluate_cost_ids_zero():
    pts = spread_points(4)
    assert evaluate_cost(pts, np.arange(4)) == 0.0


def test_evaluate_cost_centroid_coords():
    pts = PointSet(np.array([[-1.0], [1.0]]))
    assert evaluate_cost(pts, np.array([[0.0]])) == pytest.approx(2.0)


def test_evaluate_cost_empty_error():
    with pytest.raises(InputError):
        evaluate_cost(spread_points(3), np.array([], dtype=np.int64))


def test_evaluate_cost_approx_band():
    rng = np.random.default_rng(3)
    pts = normalize(PointSet(rng.uniform(0, 60, size=(120, 4)))).points
    from mpkm.spanner import exact_mode_spanner
    g = exact_mode_spanner(pts)
    centers = np.array([0, 5, 9])
    exact = evaluate_cost(pts, centers)
    eps = 0.25
    est, fallbacks = evaluate_cost_approx(g, pts, centers, eps, seed=4)
    band = g.gamma_eff ** 2 * (1 + eps)
    assert exact / band <= est <= exact * band


# --- end-to-end ------------------------------------------------------------

def test_solve_kmeans_k_equals_n():
    pts = spread_points(6)
    sol = solve_kmeans(KMeansInstance(pts, 6), PRACTICAL)
    assert sol.total_cost == 0.0
    assert sorted(sol.centers.tolist()) == list(range(6))


def test_solve_kmeans_k_one_matches_exact():
    km = planted_kmeans_instance(91, n=9, k=1, groups=3)
    sol = solve_kmeans(km, PRACTICAL, seed=91)
    opt, centers = bruteforce_kmeans_opt(km)
    assert sol.centers.size == 1
    assert sol.total_cost <= 10.0 * opt


def test_solve_kmeans_planted_ratio():
    for i, seed in enumerate(range(5200, 5206)):
        km = planted_kmeans_instance(seed, n=12 + i, k=2 + (i % 3),
                                     groups=4 + (i % 2),
                                     equal_sep=bool(i % 2))
        sol = solve_kmeans(km, PRACTICAL, seed=seed)
        assert sol.centers.size == km.k
        assert set(sol.phi.tolist()) <= set(sol.centers.tolist())
        opt, _ = bruteforce_kmeans_opt(km)
        ratio = sol.total_cost / opt if opt > 0 else 1.0
        assert ratio <= 10.0


def test_solve_kmeans_deterministic():
    km = planted_kmeans_instance(5300, n=12, k=3, groups=4, equal_sep=True)
    s1 = solve_kmeans(km, PRACTICAL, seed=7)
    s2 = solve_kmeans(km, PRACTICAL, seed=7)
    assert np.array_equal(s1.centers, s2.centers)
    assert s1.total_cost == s2.total_cost


# --- LP-side checks --------------------------------------------------------

def test_rescaled_duals_feasible():
    km, bracket = bracketed_instance()
    ct = PRACTICAL.table()
    inst1 = FLInstance(km.points, km.points, bracket.lambda1)
    sol1 = bracket.sol1
    cert1 = lmp_dual_oracle(inst1, sol1.duals, sol1.paid_set,
                            sol1.clusters.centers, ct)
    ok, bar = rescaled_dual_feasible(inst1, cert1.alpha, bracket.lambda2)
    assert ok


def test_convex_combination_feasible():
    km, bracket = bracketed_instance()
    ct = PRACTICAL.table()
    inst1 = FLInstance(km.points, km.points, bracket.lambda1)
    inst2 = FLInstance(km.points, km.points, bracket.lambda2)
    cert1 = lmp_dual_oracle(inst1, bracket.sol1.duals, bracket.sol1.paid_set,
                            bracket.sol1.clusters.centers, ct)
    cert2 = lmp_dual_oracle(inst2, bracket.sol2.duals, bracket.sol2.paid_set,
                            bracket.sol2.clusters.centers, ct)
    _, bar1 = rescaled_dual_feasible(inst1, cert1.alpha, bracket.lambda2)
    out = convex_combination_feasible(km.points, 3, bracket, bar1,
                                      cert2.alpha)
    assert out["cover"] and out["open_capacity"] and out["center_count"]
    assert out["dual_edge"] and out["dual_payment"]
