import numpy as np
import pytest

from mpkm.errors import InputError
from mpkm.rulingsets import (UnweightedGraphView, bfs_hops, luby_cover_step,
                             mis, ruling_set_2b, view_from_edges,
                             weighted_cover_set)


def random_geometric_view(rng, n=300, radius=0.12):
    pts = rng.uniform(size=(n, 2))
    edges_u, edges_v = [], []
    for i in range(n):
        d = np.sqrt(((pts - pts[i]) ** 2).sum(axis=1))
        for j in np.flatnonzero((d < radius)):
            if j > i:
                edges_u.append(i)
                edges_v.append(int(j))
    return view_from_edges(n, edges_u, edges_v)


def random_gnp_view(rng, n, p):
    iu, iv = np.triu_indices(n, k=1)
    mask = rng.random(iu.size) < p
    return view_from_edges(n, iu[mask], iv[mask])


def power_distance_ok(view, members, t):
    """No two members within t hops of each other."""
    members = sorted(int(m) for m in members)
    for m in members:
        hops = bfs_hops(view, [m], max_depth=t)
        for other in members:
            if other != m and 0 <= hops[other] <= t:
                return False
    return True


def test_luby_isolated_node_marked():
    view = view_from_edges(1, [], [])
    marked = luby_cover_step(view, np.array([1.0]), seed=0)
    assert list(marked) == [0]


def test_luby_estimate_bounds_enforced():
    view = view_from_edges(3, [0, 1], [1, 2])
    with pytest.raises(InputError):
        luby_cover_step(view, np.array([0.1, 1.0, 1.0]), seed=0)
    with pytest.raises(InputError):
        luby_cover_step(view, np.array([1.0, 10.0, 1.0]), seed=0)


def test_luby_clique_coverage_monte_carlo():
    # a marked clique node covers everything within distance 2
    m = 30
    iu, iv = np.triu_indices(m, k=1)
    view = view_from_edges(m, iu, iv)
    d_hat = np.full(m, float(m - 1))
    good = 0
    runs = 200
    for seed in range(runs):
        marked = luby_cover_step(view, d_hat, seed=seed)
        if marked.size > 0:
            good += 1
    assert good / runs >= 0.95


def test_luby_marked_high_degree_neighbors_bounded():
    rng = np.random.default_rng(3)
    view = random_gnp_view(rng, 120, 0.15)
    deg = view.degrees().astype(np.float64)
    d_hat = np.maximum(deg, 1.0) * 1.5
    cap = 0
    for seed in range(50):
        marked = set(luby_cover_step(view, d_hat, seed=seed).tolist())
        for u in range(view.n):
            cnt = sum(1 for v in view.adjacency[u]
                      if int(v) in marked and d_hat[v] >= d_hat[u])
            cap = max(cap, cnt)
    # pinned empirical bound ~ C log n with C modest
    assert cap <= 6 * np.log(view.n)


def test_mis_triangle():
    view = view_from_edges(3, [0, 1, 2], [1, 2, 0])
    members, iters = mis(view, seed=4)
    assert members.size == 1


def test_mis_empty_graph():
    view = view_from_edges(5, [], [])
    members, _ = mis(view, seed=1)
    assert list(members) == [0, 1, 2, 3, 4]


def test_mis_random_verified():
    rng = np.random.default_rng(7)
    view = random_gnp_view(rng, 100, 0.1)
    members, _ = mis(view, seed=9)
    mset = set(members.tolist())
    for u in members:
        assert not any(int(v) in mset for v in view.adjacency[u])
    for u in range(view.n):
        if u not in mset:
            assert any(int(v) in mset for v in view.adjacency[u])


def test_ruling_set_singleton():
    view = view_from_edges(1, [], [])
    res = ruling_set_2b(view, [0], t=2, epsilon=0.5, seed=0)
    assert list(res.members) == [0]
    assert res.b_out == 0


def test_ruling_set_isolated_nodes_all_in():
    view = view_from_edges(6, [], [])
    res = ruling_set_2b(view, range(6), t=2, epsilon=0.5, seed=0)
    assert list(res.members) == [0, 1, 2, 3, 4, 5]


def test_ruling_set_random_independence_and_coverage():
    rng = np.random.default_rng(11)
    view = random_gnp_view(rng, 500, 0.006)
    t = 2
    res = ruling_set_2b(view, range(500), t=t, epsilon=0.4, seed=3)
    assert res.members.size > 0
    assert power_distance_ok(view, res.members, t)
    hops = bfs_hops(view, res.members)
    assert np.all(hops >= 0) or np.all(hops[hops < 0] == -1)
    covered = hops[(hops >= 0)]
    assert covered.max() <= res.b_out * t
    # every requested node is either in S or within the reported radius
    for u in range(500):
        assert hops[u] >= 0
        assert hops[u] <= res.b_out * t


def test_weighted_cover_empty_edges_takes_all():
    view = view_from_edges(8, [], [])
    res = weighted_cover_set(view, np.ones(8), t=2, epsilon=0.2, seed=0)
    assert list(res.members) == list(range(8))
    assert res.covered_weight == res.total_weight


def test_weighted_cover_two_class_path_independent():
    n = 40
    view = view_from_edges(n, list(range(n - 1)), list(range(1, n)))
    weights = np.where(np.arange(n) % 2 == 0, 1.0, 100.0)
    t = 2
    res = weighted_cover_set(view, weights, t=t, epsilon=0.1, seed=5)
    assert res.members.size >= 1
    assert power_distance_ok(view, res.members, t)


def test_weighted_cover_geometric_coverage_rate():
    rng = np.random.default_rng(13)
    view = random_geometric_view(rng, n=300)
    weights = rng.uniform(1.0, 8.0, size=300)
    eps = 0.1
    ok = 0
    runs = 100
    for seed in range(runs):
        res = weighted_cover_set(view, weights, t=1, epsilon=eps, seed=seed)
        assert power_distance_ok(view, res.members, 1)
        if res.uncovered_frac <= eps + 1e-12:
            ok += 1
    assert ok / runs >= 0.95


def test_weighted_cover_reports_radius():
    rng = np.random.default_rng(17)
    view = random_gnp_view(rng, 200, 0.01)
    res = weighted_cover_set(view, np.ones(200), t=2, epsilon=0.2, seed=2)
    hops = bfs_hops(view, res.members)
    assert hops.min() >= 0
    assert hops.max() <= res.b_cover * 2
