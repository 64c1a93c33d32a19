"""Sequential ground-truth oracles and the classic primal-dual baseline.

Everything here is deliberately independent of the parallel pipeline: the
radius/dual formulas are evaluated by sorted-breakpoint closed forms, the
optima by explicit enumeration, and the baseline by an event-driven
simulation of uniform dual growth. Property suites compare the pipeline
against these.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass

import numpy as np

from .core import FLInstance, KMeansInstance, cost_matrix
from .errors import InputError


def exact_radius_from_costs(costs: np.ndarray, lam: float) -> float:
    """Largest r with sum_c [r^2 - cost_c]^+ <= lam, by segment scan.

    With costs sorted ascending, on the segment where exactly m hinge terms
    are active the sum is m*r^2 - prefix_m; the unique crossing of lam is
    found in the segment containing it.
    """
    c = np.sort(np.asarray(costs, dtype=np.float64))
    if c.size == 0:
        return np.inf
    prefix = np.cumsum(c)
    for m in range(1, c.size + 1):
        r2 = (lam + prefix[m - 1]) / m
        lo = c[m - 1]
        hi = c[m] if m < c.size else np.inf
        if lo <= r2 <= hi:
            return float(np.sqrt(r2))
    # lam large enough that all clients are active
    return float(np.sqrt((lam + prefix[-1]) / c.size))


def exact_radii(inst: FLInstance) -> np.ndarray:
    """Exact radius for every facility of the instance."""
    d2 = cost_matrix(inst.facilities, inst.clients)
    return np.array([exact_radius_from_costs(d2[i], inst.lam)
                     for i in range(inst.facilities.n)])


def exact_alpha_star(inst: FLInstance, radii: np.ndarray) -> np.ndarray:
    """alpha*_c = min_f max{r_f^2, cost(c,f)} for every client, full scan."""
    d2 = cost_matrix(inst.clients, inst.facilities)
    r2 = np.asarray(radii, dtype=np.float64) ** 2
    return np.min(np.maximum(d2, r2[None, :]), axis=1)


_OPT_WORD_GUARD = 2 * 10**8


def bruteforce_fl_opt(inst: FLInstance):
    """(OPT value, opened id set) over all nonempty facility subsets.

    Exponential in |F|; guarded at 18 facilities. Subset client-cost
    vectors are built by lowest-set-bit dynamic programming.
    """
    nf = inst.facilities.n
    if nf > 18:
        raise InputError(f"bruteforce_fl_opt guard: |F|={nf} > 18")
    if (1 << nf) * inst.clients.n > _OPT_WORD_GUARD:
        raise InputError("bruteforce_fl_opt guard: table too large")
    d2 = cost_matrix(inst.facilities, inst.clients)
    nsub = 1 << nf
    best_val, best_mask = np.inf, 0
    minvec = [None] * nsub
    for mask in range(1, nsub):
        low = mask & -mask
        rest = mask ^ low
        row = d2[low.bit_length() - 1]
        minvec[mask] = row if rest == 0 else np.minimum(minvec[rest], row)
        val = inst.lam * bin(mask).count("1") + float(minvec[mask].sum())
        if val < best_val:
            best_val, best_mask = val, mask
    opened = {i for i in range(nf) if best_mask >> i & 1}
    return best_val, opened


def bruteforce_kmeans_opt(km: KMeansInstance):
    """(OPT value, centers) by enumerating all k-subsets of the points."""
    n, k = km.points.n, km.k
    import math
    if math.comb(n, k) > 2 * 10**6:
        raise InputError(f"bruteforce_kmeans_opt guard: C({n},{k}) too large")
    d2 = cost_matrix(km.points, km.points)
    best_val, best = np.inf, None
    for combo in itertools.combinations(range(n), k):
        val = float(d2[:, combo].min(axis=1).sum())
        if val < best_val:
            best_val, best = val, combo
    return best_val, set(best)


@dataclass
class JVResult:
    opened: set
    assign: np.ndarray          # client -> opened facility id
    alpha: np.ndarray           # per-client duals
    beta: np.ndarray            # (n_clients, n_facilities) contributions
    connection_cost: float
    temporarily_open: list


def jv_sequential(inst: FLInstance) -> JVResult:
    """Event-driven primal-dual baseline with uniform dual growth.

    Phase 1 raises all active duals at unit rate, processing tight-edge and
    payment events from a priority queue (ties in facility-id order). The
    final opened set is a greedy lowest-id-first maximal independent set of
    the conflict graph; clients connect to their nearest opened facility.
    """
    nf, nc = inst.facilities.n, inst.clients.n
    lam = inst.lam
    d2 = cost_matrix(inst.clients, inst.facilities)

    alpha = np.zeros(nc)
    active = np.ones(nc, dtype=bool)
    open_time = np.full(nf, np.inf)
    # payment state per facility: frozen contributions + active tight clients
    frozen = np.zeros(nf)
    tight_active: list[set] = [set() for _ in range(nf)]
    tight_at = d2.copy()  # event times for edges

    events = []  # (time, kind, facility, client) kind 0=tight 1=paid
    for c in range(nc):
        for f in range(nf):
            heapq.heappush(events, (tight_at[c, f], 0, f, c))

    def payment_time(f, now):
        k = len(tight_active[f])
        if k == 0:
            return np.inf
        need = lam - frozen[f]
        base = sum(d2[c, f] for c in tight_active[f])
        return (need + base) / k

    def push_paid(f, now):
        t = payment_time(f, now)
        if t < np.inf:
            heapq.heappush(events, (t, 1, f, -1))

    n_active = nc
    while n_active > 0 and events:
        t, kind, f, c = heapq.heappop(events)
        if open_time[f] < np.inf and kind == 1:
            continue
        if kind == 0:
            if not active[c]:
                continue
            if open_time[f] < np.inf:
                # tight with an already-open facility: connect at zero beta
                alpha[c] = t
                active[c] = False
                n_active -= 1
                for f2 in range(nf):
                    if c in tight_active[f2]:
                        tight_active[f2].discard(c)
                        frozen[f2] += max(0.0, t - d2[c, f2])
                        push_paid(f2, t)
            else:
                tight_active[f].add(c)
                push_paid(f, t)
        else:
            # validate payment event (lazy deletion)
            t_now = payment_time(f, t)
            if not np.isclose(t_now, t, rtol=1e-12, atol=1e-12):
                if t_now < np.inf:
                    heapq.heappush(events, (t_now, 1, f, -1))
                continue
            open_time[f] = t
            for c2 in sorted(tight_active[f]):
                alpha[c2] = t
                active[c2] = False
                n_active -= 1
                for f2 in range(nf):
                    if c2 in tight_active[f2]:
                        tight_active[f2].discard(c2)
                        frozen[f2] += max(0.0, t - d2[c2, f2])
                        if f2 != f:
                            push_paid(f2, t)

    temp_open = sorted(np.flatnonzero(open_time < np.inf))
    beta = np.maximum(alpha[:, None] - d2, 0.0)
    # contributions only count toward temporarily open facilities for the
    # conflict graph; feasibility of beta holds for all facilities
    conflict = {f: set() for f in temp_open}
    for f1, f2 in itertools.combinations(temp_open, 2):
        if np.any((beta[:, f1] > 1e-12) & (beta[:, f2] > 1e-12)):
            conflict[f1].add(f2)
            conflict[f2].add(f1)
    opened = []
    for f in temp_open:
        if not any(g in conflict[f] for g in opened):
            opened.append(f)
    opened_arr = np.array(opened, dtype=np.int64)
    assign = opened_arr[np.argmin(d2[:, opened_arr], axis=1)]
    conn = float(d2[np.arange(nc), assign].sum())
    return JVResult(set(opened), assign, alpha, beta, conn, temp_open)
