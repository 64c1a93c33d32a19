"""Sparse metric-approximating graph built from grid hashing at doubling scales.

For each scale D = 2^i a randomly rotated, randomly shifted grid of width
proportional to D buckets the points; each nonempty bucket contributes a
star centered on its lowest-id member. Candidate edges whose true distance
exceeds gamma*D are dropped at emission, so edge weights D/4 certify
dist <= 4*gamma * (weighted graph distance) deterministically; the
two-hop *coverage* of near pairs is probabilistic and measured, never
assumed. An exact mode stores the full distance matrix and certifies
factor 1 for desk-scale oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import PointSet
from .errors import BuildError, InputError


@dataclass(frozen=True)
class LshParams:
    repetitions: int = 6
    grid_cell: float = 4.0        # bucket width multiplier on the scale D
    gamma: float = 2.0            # false-positive filter: keep dist <= gamma*D
    rotation_seed: int = 0
    max_axes: int = 12            # bucket key uses min(d, max_axes) rotated axes
    p1: float | None = None       # measured collision rates, filled by calibration
    p2: float | None = None

    def __post_init__(self):
        if self.repetitions < 1:
            raise InputError("repetitions must be >= 1")
        if self.gamma <= 1:
            raise InputError("filter gamma must be > 1")


@dataclass(frozen=True)
class ScaleGraph:
    scale_d: float
    edges: np.ndarray  # (m, 2) int64 id pairs, canonically sorted


@dataclass
class SpannerGraph:
    n: int
    edges_u: np.ndarray
    edges_v: np.ndarray
    edges_w: np.ndarray
    gamma_eff: float
    meta: dict = field(default_factory=dict)
    _adj: list | None = None

    @property
    def n_edges(self) -> int:
        return self.edges_u.shape[0]

    def adjacency(self):
        """Per-node dict of neighbor -> weight (built lazily, then shared)."""
        if self._adj is None:
            adj = [dict() for _ in range(self.n)]
            for u, v, w in zip(self.edges_u, self.edges_v, self.edges_w):
                adj[int(u)][int(v)] = float(w)
                adj[int(v)][int(u)] = float(w)
            self._adj = adj
        return self._adj


def _rotation(dim: int, axes: int, rng) -> np.ndarray:
    """Random orthonormal(ish) projection onto `axes` directions via QR."""
    g = rng.standard_normal((dim, max(axes, 1)))
    q, _ = np.linalg.qr(g)
    return q[:, :axes]


def _bucket_keys(coords, rot, shift, width):
    proj = coords @ rot
    return np.floor((proj + shift) / width).astype(np.int64)


def _scan_buckets(keys: np.ndarray):
    """Yield index arrays of identical rows of `keys` (bucket membership)."""
    order = np.lexsort(keys.T[::-1])
    sk = keys[order]
    change = np.any(sk[1:] != sk[:-1], axis=1)
    starts = np.concatenate([[0], np.flatnonzero(change) + 1, [keys.shape[0]]])
    for a, b in zip(starts[:-1], starts[1:]):
        if b - a >= 2:
            yield order[a:b]


def build_scale_graph(points: PointSet, scale_d: float, params: LshParams,
                      seed_key=()) -> ScaleGraph:
    """Bucket-star graph for one scale, with the distance filter applied.

    For each of `repetitions` hash draws and each bucket of >= 2 points,
    the lowest-id member becomes the hub and is linked to every other
    member whose true distance is at most gamma * scale_d.
    """
    coords = points.coords
    n, d = coords.shape
    axes = min(d, params.max_axes)
    width = params.grid_cell * scale_d
    cap = params.gamma * scale_d
    pairs = set()
    for rep in range(params.repetitions):
        rng = np.random.default_rng(
            np.random.SeedSequence(params.rotation_seed,
                                   spawn_key=(*seed_key, rep)))
        rot = _rotation(d, axes, rng)
        shift = rng.uniform(0.0, width, size=axes)
        keys = _bucket_keys(coords, rot, shift, width)
        for members in _scan_buckets(keys):
            hub = int(members.min())
            others = members[members != hub]
            diff = coords[others] - coords[hub]
            dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
            for v in others[dist <= cap]:
                pairs.add((hub, int(v)) if hub < v else (int(v), hub))
    if pairs:
        edges = np.array(sorted(pairs), dtype=np.int64)
    else:
        edges = np.empty((0, 2), dtype=np.int64)
    return ScaleGraph(scale_d, edges)


def build_spanner(points: PointSet, epsilon: float, params: LshParams,
                  diameter: float | None = None) -> SpannerGraph:
    """Union of scale graphs with weights D_i/4 and min-weight dedup.

    Scales run i = 0 .. ceil(log2 diameter); the build fails if the edge
    count exceeds n^(1+epsilon).
    """
    if not 0 < epsilon <= 1:
        raise InputError(f"epsilon must be in (0, 1], got {epsilon}")
    n = points.n
    if diameter is None:
        from .core import pairwise_extremes
        _, diameter = pairwise_extremes(points)
    top = max(0, math.ceil(math.log2(max(diameter, 1.0))))
    weight = {}
    for i in range(top + 1):
        d_i = float(2 ** i)
        sg = build_scale_graph(points, d_i, params, seed_key=(i,))
        w = d_i / 4.0
        for u, v in sg.edges:
            key = (int(u), int(v))
            if key not in weight or w < weight[key]:
                weight[key] = w
    budget = n ** (1.0 + epsilon)
    if len(weight) > budget:
        raise BuildError(
            f"edge budget exceeded: {len(weight)} edges > n^(1+eps) = {budget:.0f} "
            f"(n={n}, eps={epsilon}, t={params.repetitions}, scales={top + 1})")
    items = sorted(weight.items())
    uv = np.array([k for k, _ in items], dtype=np.int64).reshape(-1, 2)
    ws = np.array([w for _, w in items], dtype=np.float64)
    meta = {"epsilon": epsilon, "scales": top + 1, "seed": params.rotation_seed,
            "repetitions": params.repetitions, "mode": "lsh"}
    return SpannerGraph(n, uv[:, 0].copy(), uv[:, 1].copy(), ws,
                        gamma_eff=4.0 * params.gamma, meta=meta)


def exact_mode_spanner(points: PointSet) -> SpannerGraph:
    """Complete graph with true distances; a factor-1 metric oracle.

    Downstream code runs unchanged; two-hop distances equal true distances
    because the direct edge is always shortest.
    """
    n = points.n
    if n > 5000:
        raise InputError(f"exact mode guard: n={n} > 5000")
    iu, iv = np.triu_indices(n, k=1)
    diff = points.coords[iu] - points.coords[iv]
    w = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    g = SpannerGraph(n, iu.astype(np.int64), iv.astype(np.int64), w,
                     gamma_eff=1.0, meta={"mode": "exact"})
    g.meta["dist"] = _dense_dist(points)
    return g


def _dense_dist(points: PointSet) -> np.ndarray:
    diff = points.coords[:, None, :] - points.coords[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def two_hop_distance(g: SpannerGraph, x: int, y: int) -> float:
    """Shortest connection of at most 2 hops; inf when none exists."""
    if x == y:
        return 0.0
    if "dist" in g.meta:
        return float(g.meta["dist"][x, y])
    adj = g.adjacency()
    ax, ay = adj[x], adj[y]
    best = ax.get(y, np.inf)
    if len(ax) > len(ay):
        ax, ay = ay, ax
    for z, w1 in ax.items():
        w2 = ay.get(z)
        if w2 is not None and w1 + w2 < best:
            best = w1 + w2
    return float(best)


def ball_plus(g: SpannerGraph, x: int, r: float, within: np.ndarray | None = None):
    """Ids whose 2-hop distance from x is <= r, optionally mask-filtered.

    `within` is a boolean mask over node ids selecting the side (clients or
    facilities) the caller wants.
    """
    if r < 0:
        raise InputError("radius must be >= 0")
    if "dist" in g.meta:
        hit = g.meta["dist"][x] <= r
    else:
        hit = np.zeros(g.n, dtype=bool)
        hit[x] = True
        adj = g.adjacency()
        for z, w1 in adj[x].items():
            if w1 <= r:
                hit[z] = True
            rem = r - w1
            if rem <= 0:
                continue
            for y, w2 in adj[z].items():
                if w2 <= rem:
                    hit[y] = True
    if within is not None:
        hit = hit & within
    return np.flatnonzero(hit)


def measure_collision_rates(points: PointSet, scale_d: float, params: LshParams,
                            n_pairs: int = 2000, seed: int = 1):
    """Empirical (p1, p2): single-draw collision rates for near/far pairs.

    Near pairs are sampled among those at distance <= scale_d, far pairs at
    distance >= gamma * scale_d; returns (p1, p2, n_near, n_far).
    """
    coords = points.coords
    n, d = coords.shape
    axes = min(d, params.max_axes)
    width = params.grid_cell * scale_d
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    ii = rng.integers(0, n, size=4 * n_pairs)
    jj = rng.integers(0, n, size=4 * n_pairs)
    keep = ii != jj
    ii, jj = ii[keep], jj[keep]
    diff = coords[ii] - coords[jj]
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    near = (dist <= scale_d)
    far = (dist >= params.gamma * scale_d)
    hits_near = trials_near = hits_far = trials_far = 0
    for rep in range(params.repetitions):
        rrep = np.random.default_rng(
            np.random.SeedSequence(params.rotation_seed, spawn_key=(9999, rep)))
        rot = _rotation(d, axes, rrep)
        shift = rrep.uniform(0.0, width, size=axes)
        keys = _bucket_keys(coords, rot, shift, width)
        same = np.all(keys[ii] == keys[jj], axis=1)
        hits_near += int(np.count_nonzero(same & near))
        trials_near += int(np.count_nonzero(near))
        hits_far += int(np.count_nonzero(same & far))
        trials_far += int(np.count_nonzero(far))
    p1 = hits_near / trials_near if trials_near else float("nan")
    p2 = hits_far / trials_far if trials_far else 0.0
    return p1, p2, trials_near, trials_far


def export_edges_csv(g: SpannerGraph, path):
    """Edge list `u,v,weight` with a one-line provenance header."""
    meta = g.meta
    header = (f"# n={g.n} epsilon={meta.get('epsilon', 0)} "
              f"gamma_eff={g.gamma_eff:.17g} seed={meta.get('seed', 0)} "
              f"repetitions={meta.get('repetitions', 0)}")
    with open(path, "w") as fh:
        fh.write(header + "\n")
        fh.write("u,v,weight\n")
        for u, v, w in zip(g.edges_u, g.edges_v, g.edges_w):
            fh.write(f"{int(u)},{int(v)},{w:.17g}\n")
