"""Simulated synchronous cluster: machines of n^sigma words, round accounting.

The simulation executes everything in-process but keeps an honest ledger:
every primitive charges rounds from a fixed table (below), records data
volumes in 64-bit words, asserts that no atomic record exceeds machine
capacity, and checks the global word budget on redistribution. Re-running
with the same seed reproduces the ledger bit for bit.

Round charge table (fixed so regressions are testable):
    sort (redistribute)          1
    group_aggregate              3   (sort + tree up + tree down)
    one 1-hop neighborhood swap  1   (k-hop primitives charge t of these)
    spanner build                2   (all scales in one parallel batch)
    broadcast                    1
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AccountingError, InputError

CHARGE_SORT = 1
CHARGE_GROUP_AGGREGATE = 3
CHARGE_HOP = 1
CHARGE_SPANNER_BUILD = 2
CHARGE_BROADCAST = 1

GLOBAL_BUDGET_WORD_FACTOR = 64  # budget words = factor * n^(1+eps)


@dataclass(frozen=True)
class ClusterConfig:
    n: int
    sigma: float = 0.5
    global_budget_epsilon: float = 0.5
    word_bits: int = 64

    def __post_init__(self):
        if not 0 < self.sigma < 1:
            raise InputError(f"sigma must be in (0,1), got {self.sigma}")
        if self.n < 1:
            raise InputError("n must be positive")

    @property
    def machine_capacity(self) -> int:
        # clamped so desk-scale instances stay runnable
        return max(16, math.ceil(self.n ** self.sigma))

    @property
    def global_budget_words(self) -> int:
        return math.ceil(
            GLOBAL_BUDGET_WORD_FACTOR * self.n ** (1.0 + self.global_budget_epsilon))

    @property
    def min_l_bound(self) -> int:
        return math.ceil(self.n ** (self.sigma / 2.0))


@dataclass
class RoundLedger:
    rounds_by_phase: dict = field(default_factory=dict)
    peak_machine_words: int = 0
    global_words: int = 0
    messages_sent: int = 0

    def charge(self, phase: str, rounds: int):
        self.rounds_by_phase[phase] = self.rounds_by_phase.get(phase, 0) + rounds

    def observe(self, total_words: int, peak_words: int, moved_words: int = 0):
        self.global_words = max(self.global_words, int(total_words))
        self.peak_machine_words = max(self.peak_machine_words, int(peak_words))
        self.messages_sent += int(moved_words)

    @property
    def total_rounds(self) -> int:
        return sum(self.rounds_by_phase.values())

    def merge_parallel(self, others):
        """Combine ledgers of runs that execute concurrently.

        Rounds take the per-phase maximum; memory and traffic add up
        (parallel instances occupy additional machines).
        """
        merged = RoundLedger()
        all_ledgers = [self, *others]
        for led in all_ledgers:
            for phase, r in led.rounds_by_phase.items():
                merged.rounds_by_phase[phase] = max(
                    merged.rounds_by_phase.get(phase, 0), r)
            merged.peak_machine_words = max(merged.peak_machine_words,
                                            led.peak_machine_words)
            merged.global_words += led.global_words
            merged.messages_sent += led.messages_sent
        return merged

    def add_sequential(self, other, prefix: str = ""):
        for phase, r in other.rounds_by_phase.items():
            self.charge(prefix + phase, r)
        self.peak_machine_words = max(self.peak_machine_words,
                                      other.peak_machine_words)
        self.global_words = max(self.global_words, other.global_words)
        self.messages_sent += other.messages_sent

    def as_dict(self):
        return {
            "rounds_by_phase": dict(sorted(self.rounds_by_phase.items())),
            "total_rounds": self.total_rounds,
            "peak_machine_words": self.peak_machine_words,
            "global_words": self.global_words,
            "messages_sent": self.messages_sent,
        }


class Runtime:
    """Holds the config and ledger; all primitives charge through here."""

    def __init__(self, config: ClusterConfig, ledger: RoundLedger | None = None):
        self.config = config
        self.ledger = ledger if ledger is not None else RoundLedger()

    # -- internal accounting helpers -------------------------------------

    def _check_record(self, words: int, what: str):
        if words > self.config.machine_capacity:
            raise AccountingError(
                f"{what}: atomic record of {words} words exceeds machine "
                f"capacity {self.config.machine_capacity}")

    def _placement_peak(self, record_words: np.ndarray) -> int:
        """Greedy contiguous fill; returns realized per-machine peak."""
        cap = self.config.machine_capacity
        peak = cur = 0
        for w in record_words:
            w = int(w)
            if cur + w > cap:
                peak = max(peak, cur)
                cur = 0
            cur += w
        return max(peak, cur)

    # -- primitives -------------------------------------------------------

    def sorted_redistribute(self, keys: np.ndarray, payload: np.ndarray,
                            phase: str = "sort"):
        """Stable sort of (key, payload) records with contiguous placement.

        Returns (keys_sorted, payload_sorted, order). Charges one round and
        verifies the global budget and per-record capacity.
        """
        keys = np.asarray(keys)
        payload = np.asarray(payload)
        if payload.ndim == 1:
            payload = payload[:, None]
        rec_words = 1 + payload.shape[1]
        total = keys.shape[0] * rec_words
        if total > self.config.global_budget_words:
            raise AccountingError(
                f"global budget exceeded: {total} words > "
                f"{self.config.global_budget_words}")
        self._check_record(rec_words, "sorted_redistribute")
        order = np.argsort(keys, kind="stable")
        self.ledger.charge(phase, CHARGE_SORT)
        peak = self._placement_peak(np.full(keys.shape[0], rec_words))
        self.ledger.observe(total, peak, moved_words=total)
        return keys[order], payload[order], order

    def group_aggregate(self, keys: np.ndarray, values: np.ndarray, op: str,
                        phase: str = "aggregate"):
        """Per-key aggregate delivered back to every record of the key.

        `op` is one of sum/min/max/argmin. Combination is performed in
        sorted key order (canonical machine order) so floating point
        results are reproducible. For argmin, `values` is a (value, id)
        pair array combined lexicographically. Returns an array aligned
        with the input records.
        """
        keys = np.asarray(keys)
        values = np.asarray(values)
        self.ledger.charge(phase, CHARGE_GROUP_AGGREGATE)
        width = 1 if values.ndim == 1 else values.shape[1]
        self._check_record(1 + width, "group_aggregate")
        total = keys.shape[0] * (1 + width)
        peak = self._placement_peak(np.full(keys.shape[0], 1 + width))
        self.ledger.observe(total, peak, moved_words=2 * total)
        order = np.argsort(keys, kind="stable")
        inv = np.empty_like(order)
        inv[order] = np.arange(order.size)
        sk = keys[order]
        sv = values[order]
        boundaries = np.concatenate(
            [[0], np.flatnonzero(sk[1:] != sk[:-1]) + 1, [sk.size]])
        if values.ndim == 1:
            out_sorted = np.empty_like(sv, dtype=np.float64)
        else:
            out_sorted = np.empty(sv.shape, dtype=np.float64)
        for a, b in zip(boundaries[:-1], boundaries[1:]):
            seg = sv[a:b]
            if op == "sum":
                agg = seg.sum(axis=0)
            elif op == "min":
                agg = seg.min(axis=0)
            elif op == "max":
                agg = seg.max(axis=0)
            elif op == "argmin":
                # lexicographic (value, id): deterministic tie-break
                idx = np.lexsort((seg[:, 1], seg[:, 0]))[0]
                agg = seg[idx]
            else:
                raise InputError(f"unknown aggregate op {op!r}")
            out_sorted[a:b] = agg
        return out_sorted[inv]

    def khop_min_l(self, adjacency, init_sets, l: int, t: int,
                   phase: str = "min_l"):
        """The l smallest elements over each node's t-hop neighborhood.

        `adjacency` is a sequence of neighbor-id iterables, `init_sets` a
        sequence of sorted tuples/lists drawn from a totally ordered
        domain. Implemented as t rounds of the 1-hop recurrence.
        """
        if l > self.config.min_l_bound:
            raise InputError(
                f"l={l} exceeds bound n^(sigma/2) = {self.config.min_l_bound}")
        cur = [tuple(sorted(s)[:l]) for s in init_sets]
        n = len(cur)
        edge_count = sum(len(a) for a in adjacency)
        self._check_record(l + 1, "khop_min_l")
        for _ in range(t):
            self.ledger.charge(phase, CHARGE_HOP)
            nxt = []
            for u in range(n):
                merged = list(cur[u])
                for v in adjacency[u]:
                    merged.extend(cur[v])
                merged.sort()
                # drop duplicates across neighborhoods
                out = []
                for x in merged:
                    if not out or x != out[-1]:
                        out.append(x)
                    if len(out) == l:
                        break
                nxt.append(tuple(out))
            cur = nxt
            total = (edge_count + n) * (l + 1)
            self.ledger.observe(total, min(total, self.config.machine_capacity),
                                moved_words=edge_count * l)
        return cur

    def khop_approx_sum(self, adjacency, values, t: int, epsilon: float,
                        seed: int, phase: str = "approx_sum"):
        """(1+epsilon) overestimates of t-hop neighborhood sums.

        Exponential-draw min sketch: for repetition r each node draws
        y = E_r / x_u (E_r standard exponential); the minimum of y over a
        set is Exp(sum x). Group means of minima are inverted and
        bias-corrected, the median over 9 groups is scaled by (1+eps/2) so
        the estimate lands in [X, (1+eps)X] with calibrated probability.
        Charges t one-hop rounds (repetitions ride along in parallel).
        """
        if epsilon < 0.01:
            raise InputError("epsilon must be >= 0.01")
        values = np.asarray(values, dtype=np.float64)
        if np.any(values < 0):
            raise InputError("values must be nonnegative")
        n = values.shape[0]
        groups, per_group = _sketch_shape(n, epsilon)
        reps = groups * per_group
        from .rulingsets import _as_entropy
        rng = np.random.default_rng(np.random.SeedSequence(_as_entropy(seed)))
        draws = rng.standard_exponential((n, reps))
        with np.errstate(divide="ignore"):
            y = np.where(values[:, None] > 0, draws / values[:, None], np.inf)
        edge_count = sum(len(a) for a in adjacency)
        for _ in range(t):
            self.ledger.charge(phase, CHARGE_HOP)
            nxt = y.copy()
            for u in range(n):
                for v in adjacency[u]:
                    np.minimum(nxt[u], y[v], out=nxt[u])
            y = nxt
            total = (edge_count + n) * 2
            self.ledger.observe(total * min(reps, 64),
                                min(total, self.config.machine_capacity),
                                moved_words=edge_count)
        if t == 0:
            self.ledger.observe(n * 2, min(n * 2, self.config.machine_capacity))
        return _invert_min_draws(y, groups, per_group, epsilon)


def _sketch_shape(n: int, epsilon: float):
    groups = 9
    per_group = math.ceil((48.0 + 6.0 * math.log(max(n, 2))) /
                          (groups * epsilon ** 2))
    return groups, per_group


def _invert_min_draws(y: np.ndarray, groups: int, per_group: int,
                      epsilon: float) -> np.ndarray:
    """Median-of-means inversion of exponential minima, biased up by eps/2."""
    n = y.shape[0]
    grouped = y.reshape(n, groups, per_group)
    sums = grouped.sum(axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        est = np.where(np.isfinite(sums), (per_group - 1) / sums, 0.0)
    mom = np.median(est, axis=1)
    return (1.0 + epsilon / 2.0) * mom


def mom_sum_estimate(values, epsilon: float, seed) -> float:
    """Global (1+epsilon) sum estimate by the exponential-min sketch."""
    if epsilon < 0.01:
        raise InputError("epsilon must be >= 0.01")
    values = np.asarray(values, dtype=np.float64)
    if np.any(values < 0):
        raise InputError("values must be nonnegative")
    n = values.shape[0]
    groups, per_group = _sketch_shape(n, epsilon)
    from .rulingsets import _as_entropy
    rng = np.random.default_rng(np.random.SeedSequence(_as_entropy(seed)))
    draws = rng.standard_exponential((n, groups * per_group))
    with np.errstate(divide="ignore"):
        y = np.where(values[:, None] > 0, draws / values[:, None], np.inf)
    mins = y.min(axis=0, keepdims=True)
    return float(_invert_min_draws(mins, groups, per_group, epsilon)[0])
