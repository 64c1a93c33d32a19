"""Point sets, instances, the squared-distance cost, and preprocessing.

Costs are squared Euclidean distances; they satisfy a relaxed triangle
inequality (sum of costs along an alternating sequence of length l is at
least cost(endpoints)/l) instead of the metric one. Instances are expected
to be normalized so that distinct points are at distance >= 1 and the
diameter is recorded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

_REL_TOL = 1e-9


@dataclass(frozen=True)
class PointSet:
    """Points with ids 0..n-1 given by row order of `coords` (n x d)."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=np.float64)
        if c.ndim != 2:
            raise InputError("coords must be a 2-d array (n points x d dims)")
        object.__setattr__(self, "coords", c)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    def __len__(self) -> int:
        return self.n


@dataclass(frozen=True)
class FLInstance:
    facilities: PointSet
    clients: PointSet
    lam: float  # uniform facility opening cost

    def __post_init__(self):
        if self.clients.n == 0:
            raise InputError("instance needs at least one client")
        if not self.lam >= 1:
            raise InputError(f"opening cost must be >= 1, got {self.lam}")
        if self.facilities.n and self.facilities.dim != self.clients.dim:
            raise InputError("facility/client dimension mismatch")


@dataclass(frozen=True)
class KMeansInstance:
    points: PointSet
    k: int

    def __post_init__(self):
        if not 1 <= self.k <= self.points.n:
            raise InputError(f"k={self.k} out of range for n={self.points.n}")


def cost(x, y) -> float:
    """Squared Euclidean distance between two coordinate vectors."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise InputError(f"dimension mismatch: {x.shape} vs {y.shape}")
    d = x - y
    return float(d @ d)


def cost_matrix(a: PointSet, b: PointSet) -> np.ndarray:
    """All-pairs squared distances, shape (a.n, b.n)."""
    diff = a.coords[:, None, :] - b.coords[None, :, :]
    out = np.einsum("ijk,ijk->ij", diff, diff)
    # guard tiny negative fuzz from the einsum path
    np.maximum(out, 0.0, out=out)
    return out


def relaxed_triangle_holds(seq) -> bool:
    """Check sum of step costs >= cost(first,last)/steps for a sequence.

    This is the rearranged relaxed triangle inequality the squared metric
    satisfies; used as a property-test helper for `cost`.
    """
    pts = [np.asarray(p, dtype=np.float64) for p in seq]
    if len(pts) < 3:
        raise InputError("sequence needs length >= 3 (at least two steps)")
    steps = len(pts) - 1
    total = sum(cost(pts[i - 1], pts[i]) for i in range(1, len(pts)))
    direct = cost(pts[0], pts[-1])
    return total >= direct / steps - _REL_TOL * max(direct, 1.0)


def pairwise_extremes(ps: PointSet):
    """(min, max) pairwise distance over distinct index pairs."""
    if ps.n < 2:
        return (np.inf, 0.0)
    d2 = cost_matrix(ps, ps)
    iu = np.triu_indices(ps.n, k=1)
    vals = d2[iu]
    return float(np.sqrt(vals.min())), float(np.sqrt(vals.max()))


@dataclass(frozen=True)
class NormalizeResult:
    points: PointSet
    scale: float
    diameter: float  # max pairwise distance after scaling


def normalize(ps: PointSet) -> NormalizeResult:
    """Rescale so the minimum pairwise distance is exactly 1.

    Duplicate points are rejected: the downstream radius and ball logic
    assumes distinct points are at distance >= 1.
    """
    if ps.n < 2:
        return NormalizeResult(ps, 1.0, 0.0)
    dmin, dmax = pairwise_extremes(ps)
    if dmin == 0.0:
        raise InputError("duplicate points: minimum pairwise distance is 0")
    scale = 1.0 / dmin
    if abs(scale - 1.0) < 1e-15:
        return NormalizeResult(ps, 1.0, dmax)
    return NormalizeResult(PointSet(ps.coords * scale), scale, dmax * scale)


def project(ps: PointSet, target_dim: int, seed: int) -> PointSet:
    """Data-oblivious random sign projection to `target_dim` dimensions.

    One shared dense +-1/sqrt(target_dim) matrix, deterministic given seed.
    The distortion this introduces is measured by callers, not asserted.
    """
    if target_dim < 1:
        raise InputError(f"target_dim must be >= 1, got {target_dim}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    signs = rng.integers(0, 2, size=(ps.dim, target_dim)) * 2 - 1
    mat = signs.astype(np.float64) / np.sqrt(target_dim)
    return PointSet(ps.coords @ mat)


def max_pairwise_distortion(orig: PointSet, proj: PointSet) -> float:
    """Largest ratio between projected and original pairwise distances."""
    if orig.n < 2:
        return 1.0
    d0 = cost_matrix(orig, orig)
    d1 = cost_matrix(proj, proj)
    iu = np.triu_indices(orig.n, k=1)
    r = np.sqrt(d1[iu] / d0[iu])
    return float(max(r.max(), 1.0 / r.min()))


@dataclass(frozen=True)
class UnionGeometry:
    """Facilities and clients merged into distinct locations.

    A facility and a client may share a location (distance 0); distinct
    locations must respect the >= 1 separation after normalization. Node
    ids index `coords`; `fac_node[i]` / `cli_node[j]` map instance ids to
    node ids, and the boolean masks select each side.
    """

    coords: np.ndarray
    fac_node: np.ndarray
    cli_node: np.ndarray
    is_facility: np.ndarray
    is_client: np.ndarray
    diameter: float

    @property
    def n(self) -> int:
        return self.coords.shape[0]


def build_union(inst: FLInstance) -> UnionGeometry:
    """Merge the instance's facilities and clients by exact coordinates."""
    fac, cli = inst.facilities, inst.clients
    if fac.coords.shape == cli.coords.shape and np.array_equal(fac.coords, cli.coords):
        # common reduction case: every point is both facility and client
        coords = fac.coords
        idx = np.arange(fac.n)
        ones = np.ones(fac.n, dtype=bool)
        dmin, dmax = pairwise_extremes(PointSet(coords))
        if fac.n >= 2 and dmin < 1.0 - 1e-9:
            raise InputError(
                f"instance not normalized: distinct locations at distance "
                f"{dmin:.6g} < 1")
        return UnionGeometry(coords, idx, idx.copy(), ones, ones.copy(), dmax)

    index = {}
    rows = []
    fac_node = np.empty(fac.n, dtype=np.int64)
    cli_node = np.empty(cli.n, dtype=np.int64)
    for i in range(fac.n):
        key = fac.coords[i].tobytes()
        node = index.setdefault(key, len(rows))
        if node == len(rows):
            rows.append(fac.coords[i])
        fac_node[i] = node
    for j in range(cli.n):
        key = cli.coords[j].tobytes()
        node = index.setdefault(key, len(rows))
        if node == len(rows):
            rows.append(cli.coords[j])
        cli_node[j] = node
    coords = np.vstack(rows)
    n = coords.shape[0]
    is_fac = np.zeros(n, dtype=bool)
    is_cli = np.zeros(n, dtype=bool)
    is_fac[fac_node] = True
    is_cli[cli_node] = True
    dmin, dmax = pairwise_extremes(PointSet(coords))
    if n >= 2 and dmin < 1.0 - 1e-9:
        raise InputError(
            f"instance not normalized: distinct locations at distance {dmin:.6g} < 1"
        )
    return UnionGeometry(coords, fac_node, cli_node, is_fac, is_cli, dmax)


def normalize_instance(inst: FLInstance) -> tuple[FLInstance, float]:
    """Jointly rescale facilities and clients so distinct locations are >= 1 apart."""
    merged = np.vstack([inst.facilities.coords, inst.clients.coords])
    uniq = np.unique(merged, axis=0)
    res = normalize(PointSet(uniq))
    s = res.scale
    return (
        FLInstance(PointSet(inst.facilities.coords * s),
                   PointSet(inst.clients.coords * s),
                   inst.lam),
        s,
    )
