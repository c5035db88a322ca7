"""Abstract hard-core polymer systems and their cluster expansions.

Polymers are opaque indices 0..n-1. Two polymers are compatible or not; a
polymer is never compatible with itself. The partition function sums the
product of activities over sets of pairwise compatible polymers, and its log
is expanded over clusters (multisets with a connected incompatibility graph)
weighted by Ursell coefficients.
"""

from __future__ import annotations

import functools
import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import SizeCapError, ValidationError

MAX_EXACT_POLYMERS = 25
MAX_CLUSTER_SIZE = 8
MAX_CLUSTERS = 500_000
# loop polymers on small boxes form dense incompatibility graphs, for which
# the subset recursion stays cheap well beyond the generic cap
MAX_BRIDGE_POLYMERS = 128


@dataclass
class PolymerSystem:
    zeta: np.ndarray
    incompatible: np.ndarray  # boolean, symmetric, True on the diagonal
    a_weight: np.ndarray
    d_weight: np.ndarray
    delta: float = 0.5
    labels: list = field(default_factory=list)

    def __post_init__(self):
        self.zeta = np.asarray(self.zeta, dtype=float)
        n = len(self.zeta)
        inc = np.array(self.incompatible, dtype=bool).reshape(n, n)
        if not (inc == inc.T).all():
            raise ValidationError("compatibility must be symmetric")
        np.fill_diagonal(inc, True)
        self.incompatible = inc
        self.a_weight = _weights(self.a_weight, n, "a")
        self.d_weight = _weights(self.d_weight, n, "d")
        if not 0 <= self.delta < 1:
            raise ValidationError(f"delta must lie in [0, 1), got {self.delta}")
        if not self.labels:
            self.labels = list(range(n))

    @property
    def n(self) -> int:
        return len(self.zeta)

    def compatible(self, i: int, j: int) -> bool:
        return not self.incompatible[i, j]

    def neighbours(self, i: int) -> list[int]:
        """Polymers incompatible with ``i`` (including ``i``)."""
        return [int(j) for j in np.flatnonzero(self.incompatible[i])]

    @classmethod
    def from_pairs(cls, zeta, incompatible_pairs=(), a=None, d=None, delta=0.5, labels=None):
        zeta = np.asarray(zeta, dtype=float)
        n = len(zeta)
        inc = np.eye(n, dtype=bool)
        for i, j in incompatible_pairs:
            if not (0 <= i < n and 0 <= j < n):
                raise ValidationError(f"pair ({i}, {j}) out of range")
            inc[i, j] = inc[j, i] = True
        a = np.zeros(n) if a is None else a
        d = np.zeros(n) if d is None else d
        return cls(zeta, inc, a, d, delta, list(labels or []))

    @classmethod
    def from_json(cls, obj) -> "PolymerSystem":
        if isinstance(obj, str):
            obj = json.loads(obj)
        n = int(obj["n"])
        zeta = obj["zeta"]
        if len(zeta) != n:
            raise ValidationError("zeta must have n entries")
        return cls.from_pairs(
            zeta, obj.get("incompatible_pairs", []), obj.get("a"), obj.get("d"), obj.get("delta", 0.5)
        )

    def to_json(self) -> dict:
        pairs = [[i, j] for i in range(self.n) for j in range(i + 1, self.n) if self.incompatible[i, j]]
        return {
            "n": self.n,
            "zeta": self.zeta.tolist(),
            "incompatible_pairs": pairs,
            "a": self.a_weight.tolist(),
            "d": self.d_weight.tolist(),
            "delta": self.delta,
        }


def _weights(w, n, name):
    w = np.zeros(n) if w is None else np.asarray(w, dtype=float)
    if w.shape != (n,):
        raise ValidationError(f"{name} weights must have {n} entries")
    if (w < 0).any():
        raise ValidationError(f"{name} weights must be non-negative")
    return w


def exact_partition(sys: PolymerSystem, cap: int = MAX_EXACT_POLYMERS) -> float:
    """Sum over compatible subsets of the product of activities."""
    if sys.n > cap:
        raise SizeCapError(f"exact polymer sums are capped at {cap} polymers, system has {sys.n}")
    nbr = [sum(1 << j for j in sys.neighbours(i)) for i in range(sys.n)]
    zeta = sys.zeta.tolist()

    @functools.lru_cache(maxsize=None)
    def rec(mask: int) -> float:
        if mask == 0:
            return 1.0
        i = mask.bit_length() - 1
        rest = mask & ~(1 << i)
        return rec(rest) + zeta[i] * rec(mask & ~nbr[i])

    return rec((1 << sys.n) - 1)


def exact_log_partition(sys: PolymerSystem, cap: int = MAX_EXACT_POLYMERS) -> float:
    total = exact_partition(sys, cap)
    if not total > 0:
        raise ValidationError(f"polymer partition sum is not positive ({total})")
    return math.log(total)


@functools.lru_cache(maxsize=4096)
def _connected_sum(adj: tuple) -> int:
    """Sum over connected spanning graphs of prod (-1) over edges, restricted
    to edges of the incompatibility graph with adjacency bitmasks ``adj``.

    With 0/1 compatibility, the sum over all graphs on S is 1 if S has no
    incompatible pair and 0 otherwise; the connected part follows by pinning
    the lowest vertex and subtracting the disconnected remainder.
    """
    n = len(adj)
    full = (1 << n) - 1
    free = [True] * (1 << n)
    for s in range(1, 1 << n):
        low = (s & -s).bit_length() - 1
        rest = s & ~(1 << low)
        free[s] = free[rest] and not (adj[low] & rest)
    conn = [0] * (1 << n)
    for s in range(1, 1 << n):
        low = s & -s
        rest = s & ~low
        total = int(free[s])
        t = rest
        # proper subsets T of s containing the lowest vertex
        while True:
            sub = t | low
            if sub != s:
                total -= conn[sub] * int(free[s & ~sub])
            if t == 0:
                break
            t = (t - 1) & rest
        conn[s] = total
    return conn[full]


def ursell(cluster: Sequence[int], compatible) -> Fraction:
    """Ursell coefficient of a multiset of polymers.

    ``compatible`` is a predicate on polymer pairs or a PolymerSystem.
    Repeated polymers are mutually incompatible.
    """
    cluster = sorted(cluster)
    n = len(cluster)
    if n == 0:
        return Fraction(0)
    if n > MAX_CLUSTER_SIZE:
        raise SizeCapError(f"Ursell coefficients are capped at {MAX_CLUSTER_SIZE} elements")
    pred = compatible.compatible if isinstance(compatible, PolymerSystem) else compatible
    adj = []
    for i in range(n):
        m = 0
        for j in range(n):
            if i != j and (cluster[i] == cluster[j] or not pred(cluster[i], cluster[j])):
                m |= 1 << j
        adj.append(m)
    norm = 1
    for _, grp in itertools.groupby(cluster):
        norm *= math.factorial(len(list(grp)))
    return Fraction(_connected_sum(tuple(adj)), norm)


def connected_supports(sys: PolymerSystem, max_size: int, pinned: int | None = None) -> Iterator[tuple]:
    """Sets of distinct polymers whose incompatibility graph is connected."""
    seeds = [pinned] if pinned is not None else range(sys.n)
    seen: set = set()
    nbrs = [set(sys.neighbours(i)) for i in range(sys.n)]
    stack = [frozenset([s]) for s in seeds]
    while stack:
        s = stack.pop()
        if s in seen:
            continue
        seen.add(s)
        yield tuple(sorted(s))
        if len(s) >= max_size:
            continue
        frontier = set().union(*(nbrs[i] for i in s)) - s
        for j in frontier:
            t = s | {j}
            if t not in seen:
                stack.append(t)


def _compositions(k: int, total_max: int) -> Iterator[tuple]:
    """Tuples of k positive integers with sum at most total_max."""
    if k == 0:
        yield ()
        return
    for first in range(1, total_max - (k - 1) + 1):
        for rest in _compositions(k - 1, total_max - first):
            yield (first,) + rest


def iter_clusters(sys: PolymerSystem, max_order: int, pinned: int | None = None) -> Iterator[tuple]:
    """Connected clusters of total multiplicity <= max_order, as sorted index tuples."""
    if max_order > MAX_CLUSTER_SIZE:
        raise SizeCapError(f"cluster order is capped at {MAX_CLUSTER_SIZE}")
    count = 0
    for support in connected_supports(sys, max_order, pinned):
        for mult in _compositions(len(support), max_order):
            count += 1
            if count > MAX_CLUSTERS:
                raise SizeCapError(f"more than {MAX_CLUSTERS} clusters; use a smaller order")
            yield tuple(i for i, m in zip(support, mult) for _ in range(m))


def truncated_log_partition(sys: PolymerSystem, max_order: int) -> float:
    """Cluster expansion of log Z keeping clusters up to total multiplicity max_order."""
    total = 0.0
    for cl in iter_clusters(sys, max_order):
        coeff = ursell(cl, sys)
        if coeff:
            total += float(coeff) * float(np.prod(sys.zeta[list(cl)]))
    return total


@dataclass
class ConvergenceReport:
    holds: bool
    witnesses: list  # (polymer, condition number, lhs, rhs) for each violation

    @property
    def first_violation(self):
        return self.witnesses[0] if self.witnesses else None


def _delta_ratio(delta: float) -> float:
    """delta / |log(1 - delta)|, which tends to 1 as delta -> 0."""
    if delta == 0:
        return 1.0
    return delta / abs(math.log1p(-delta))


def check_convergence(sys: PolymerSystem) -> ConvergenceReport:
    """Check both activity conditions of the cluster-expansion lemma for every polymer."""
    weighted = np.abs(sys.zeta) * np.exp(sys.a_weight + sys.d_weight)
    ratio = _delta_ratio(sys.delta)
    witnesses = []
    for i in range(sys.n):
        if weighted[i] > sys.delta:
            witnesses.append((sys.labels[i], 1, float(weighted[i]), sys.delta))
        lhs = float(weighted[sys.incompatible[i]].sum())
        rhs = ratio * float(sys.a_weight[i])
        if lhs > rhs:
            witnesses.append((sys.labels[i], 2, lhs, rhs))
    return ConvergenceReport(not witnesses, witnesses)


@dataclass
class RemainderReport:
    pinned: int
    total: float
    bound: float
    max_order: int
    convergence_holds: bool

    @property
    def within_bound(self) -> bool:
        return self.total <= self.bound

    @property
    def consistent(self) -> bool:
        """False only if the bound fails while the convergence hypothesis holds."""
        return self.within_bound or not self.convergence_holds


def remainder_bound_check(sys: PolymerSystem, pinned: int, max_order: int = MAX_CLUSTER_SIZE) -> RemainderReport:
    """Truncated sum over clusters g of |ursell({pinned} + g) prod zeta e^d| against e^a."""
    if not 0 <= pinned < sys.n:
        raise ValidationError(f"no polymer {pinned}")
    weighted = sys.zeta * np.exp(sys.d_weight)
    total = 0.0
    for cl in iter_clusters(sys, max_order, pinned):
        rest = list(cl)
        rest.remove(pinned)
        coeff = ursell(cl, sys)
        if coeff:
            total += abs(float(coeff) * float(np.prod(weighted[rest])))
    report = RemainderReport(pinned, total, math.exp(sys.a_weight[pinned]), max_order,
                             check_convergence(sys).holds)
    if not report.consistent:
        raise AssertionError(
            f"remainder {total} exceeds e^a = {report.bound} although the convergence conditions hold"
        )
    return report


@dataclass
class BridgeReport:
    polymer_log: float
    direct_log: float
    truncated_log: float | None
    n_polymers: int
    system: PolymerSystem

    @property
    def discrepancy(self) -> float:
        return abs(self.polymer_log - self.direct_log)

    @property
    def rel_discrepancy(self) -> float:
        """Relative gap between the two partition-function ratios."""
        return abs(math.expm1(self.polymer_log - self.direct_log))


def dimer_polymer_bridge(region, params, bc, order: int = 0) -> BridgeReport:
    """Treat outer loops of a small dimer region as hard-core polymers.

    A polymer is a loop that occurs as the only outer loop of some loop
    family; its activity is the total weight of those families divided by the
    oriented partition function of the whole region. Two loops are compatible
    when their interiors are disjoint and not adjacent, as for distinct outer
    loops of one configuration. The result compares the hard-core evaluation
    with the exact log ratio, which also contains the segment interactions
    that the abstraction leaves out.
    """
    from . import gibbs
    from .decomposition import verify_loop_factorization
    from .lattice import neighbours

    report = verify_loop_factorization(region, params, bc)
    ref = gibbs.oriented_log_Z(region, params, bc)
    loops: dict = {}
    for fam, lhs, _ in report.per_family:
        outer = [l for l, p in zip(fam.loops, fam.parents) if p < 0]
        if len(outer) == 1:
            key = outer[0].interior
            loops.setdefault(key, []).append(lhs - ref)
    keys = sorted(loops, key=lambda s: sorted(s))
    zeta = [float(np.exp(np.logaddexp.reduce(loops[k]))) for k in keys]
    halo = [k | {t for s in k for t in neighbours(s)} for k in keys]
    pairs = [(i, j) for i in range(len(keys)) for j in range(i + 1, len(keys)) if halo[i] & keys[j]]
    sys = PolymerSystem.from_pairs(zeta, pairs, labels=[sorted(k) for k in keys])
    direct = gibbs.enumerate_log_Z(region, params, bc) - ref
    poly = exact_log_partition(sys, MAX_BRIDGE_POLYMERS) if sys.n else 0.0
    trunc = truncated_log_partition(sys, order) if order > 0 else None
    return BridgeReport(poly, direct, trunc, sys.n, sys)
