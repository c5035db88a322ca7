"""Exact finite-volume statistics of the interacting dimer model.

A configuration's weight is z^n e^{J k}, where n is the number of dimers and
k counts interactions: unordered pairs of collinear dimers at distance one,
plus contacts with magnetized boundary edges. A magnetized edge acts like a
dimer sitting just outside the region, so a dimer gains e^J for each
magnetized edge that is parallel to it and shares an endpoint with it.

Exact sums are organised as integer count polynomials {(n, k): count}, which
can then be evaluated at any (z, J) in log space.
"""

from __future__ import annotations

import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .errors import SizeCapError, ValidationError
from .lattice import (
    INFINITY, Edge, Orientation, Region, Site, boundary, edge_points,
    q_distance, segments,
)
from .transfer1d import (
    ModelParams, log_psi, magnetized_vector, open_vector, solve,
)

MAX_ENUMERATION_EDGES = 40


@dataclass(frozen=True)
class BoundaryCondition:
    q: Orientation
    magnetized: frozenset = field(default_factory=frozenset)
    ell0: int = 0

    def __post_init__(self):
        object.__setattr__(self, "q", Orientation.parse(self.q))
        object.__setattr__(self, "magnetized", frozenset(self.magnetized))
        if int(self.ell0) != self.ell0 or self.ell0 < 0:
            raise ValidationError(f"ell0 must be a non-negative integer, got {self.ell0}")
        object.__setattr__(self, "ell0", int(self.ell0))

    def validate(self, region: Region) -> None:
        extra = self.magnetized - boundary(region)
        if extra:
            raise ValidationError(f"magnetized edges not on the region boundary: {sorted(extra)}")


def make_sources(edges: Iterable[Edge], ell0: int = 0) -> frozenset:
    """Validate a source set: vertex-disjoint, ideally ``ell0`` apart."""
    edges = list(dict.fromkeys(edges))
    seen: set[Site] = set()
    for e in edges:
        if e.a in seen or e.b in seen:
            raise ValidationError("source edges must be vertex-disjoint")
        seen.update(e.sites)
    if ell0 > 0:
        for i, e in enumerate(edges):
            for f in edges[i + 1:]:
                d = min(math.dist(p, r) for p in e.sites for r in f.sites)
                if d < ell0:
                    warnings.warn(f"sources {e} and {f} are closer than ell0={ell0}", stacklevel=2)
    return frozenset(edges)


def collinear_neighbours(e: Edge) -> tuple[Edge, Edge]:
    """The two parallel edges at distance one on the same line."""
    dx, dy = e.orientation.step
    return (e.translated(-2 * dx, -2 * dy), e.translated(2 * dx, 2 * dy))


def touching_parallels(e: Edge) -> tuple[Edge, Edge]:
    """The two parallel edges on the same line sharing an endpoint with ``e``."""
    dx, dy = e.orientation.step
    return (e.translated(-dx, -dy), e.translated(dx, dy))


def interacts(d1: Edge, d2: Edge) -> bool:
    """Same orientation, same line, one bond apart."""
    return d1.orientation is d2.orientation and d2 in collinear_neighbours(d1)


def is_dimer_configuration(config: Iterable[Edge]) -> bool:
    seen: set[Site] = set()
    for e in config:
        if e.a in seen or e.b in seen:
            return False
        seen.update(e.sites)
    return True


def interaction_count(config: Iterable[Edge], magnetized: Iterable[Edge] = ()) -> int:
    """Interacting pairs plus magnetized contacts."""
    config = frozenset(config)
    magnetized = frozenset(magnetized)
    pairs = sum(1 for d in config for n in collinear_neighbours(d) if n in config) // 2
    contacts = sum(1 for d in config for m in touching_parallels(d) if m in magnetized)
    return pairs + contacts


def log_weight(config: Iterable[Edge], params: ModelParams, bc: BoundaryCondition) -> float:
    config = frozenset(config)
    if not is_dimer_configuration(config):
        raise ValidationError("dimers overlap")
    k = interaction_count(config, bc.magnetized)
    return len(config) * math.log(params.z) + params.J * k


def weight(config: Iterable[Edge], params: ModelParams, bc: BoundaryCondition) -> float:
    return math.exp(log_weight(config, params, bc))


def _allowed_opposite(e: Edge, bc: BoundaryCondition, boundary_points: set[Site]) -> bool:
    if bc.ell0 == 0:
        return True
    for p in e.sites:
        for r in boundary_points:
            d = q_distance(p, r, bc.q)
            if d is not INFINITY and d < bc.ell0:
                return False
    return True


def allowed_edges(region: Region, bc: BoundaryCondition, orientations=None) -> list[Edge]:
    """Edges of the region that an admissible configuration may occupy."""
    orientations = {Orientation.parse(o) for o in (orientations or (Orientation.H, Orientation.V))}
    pts = edge_points(boundary(region))
    out = []
    for e in region.edges():
        if e.orientation not in orientations:
            continue
        if e.orientation is bc.q.opposite and not _allowed_opposite(e, bc, pts):
            continue
        out.append(e)
    return out


def admissible(config: Iterable[Edge], bc: BoundaryCondition, region: Region) -> bool:
    """Every opposite-orientation dimer keeps q-distance >= ell0 from the boundary."""
    if bc.ell0 == 0:
        return True
    pts = edge_points(boundary(region))
    return all(
        _allowed_opposite(e, bc, pts) for e in config if e.orientation is bc.q.opposite
    )


def _check_size(region: Region) -> None:
    n = len(region.edges())
    if n > MAX_ENUMERATION_EDGES:
        raise SizeCapError(
            f"exact enumeration is capped at {MAX_ENUMERATION_EDGES} edges, region has {n}"
        )


def iter_configurations(
    region: Region,
    bc: BoundaryCondition,
    sources: Iterable[Edge] = (),
    orientations=None,
) -> Iterator[tuple[frozenset, int, int]]:
    """Yield (dimers, n_dimers, interaction_count) over admissible configurations.

    Configurations always contain every source edge. Sites are visited in
    sorted order; each is left empty or paired with its right or upper
    neighbour.
    """
    _check_size(region)
    bc.validate(region)
    sources = make_sources(sources)
    allowed = set(allowed_edges(region, bc, orientations))
    for s in sources:
        if s.a not in region or s.b not in region:
            raise ValidationError(f"source {s} is not inside the region")
        if s not in allowed:
            return
    order = sorted(region.sites)
    occupied: set[Site] = set()
    placed: set[Edge] = set()
    k0 = 0
    for s in sorted(sources):
        k0 += _gain(s, placed, bc.magnetized)
        placed.add(s)
        occupied.update(s.sites)
    steps = {
        x: [e for e in (Edge(x, x.shifted(1, 0)), Edge(x, x.shifted(0, 1))) if e in allowed]
        for x in order
    }

    def rec(i: int, n: int, k: int):
        while i < len(order) and order[i] in occupied:
            i += 1
        if i == len(order):
            yield frozenset(placed), n, k
            return
        x = order[i]
        yield from rec(i + 1, n, k)
        for e in steps[x]:
            if e.b in occupied:
                continue
            gain = _gain(e, placed, bc.magnetized)
            placed.add(e)
            occupied.update(e.sites)
            yield from rec(i + 1, n + 1, k + gain)
            placed.discard(e)
            occupied.difference_update(e.sites)

    yield from rec(0, len(sources), k0)


def _gain(e: Edge, placed: set, magnetized: frozenset) -> int:
    g = sum(1 for n in collinear_neighbours(e) if n in placed)
    g += sum(1 for m in touching_parallels(e) if m in magnetized)
    return g


def count_polynomial(
    region: Region,
    bc: BoundaryCondition,
    sources: Iterable[Edge] = (),
    orientations=None,
) -> dict:
    """{(n_dimers, interactions): number of admissible configurations}."""
    counts: dict = defaultdict(int)
    for _, n, k in iter_configurations(region, bc, sources, orientations):
        counts[(n, k)] += 1
    return dict(counts)


def evaluate_log(poly: dict, params: ModelParams) -> float:
    """log of sum count * z^n e^{J k}; -inf for an empty sum."""
    if not poly:
        return -math.inf
    lz = math.log(params.z)
    terms = np.array([math.log(c) + n * lz + k * params.J for (n, k), c in poly.items()])
    m = terms.max()
    return float(m + math.log(np.exp(terms - m).sum()))


def evaluate(poly: dict, params: ModelParams) -> float:
    """sum count * z^n e^{J k}, summed directly while it stays finite."""
    if not poly:
        return 0.0
    log_total = evaluate_log(poly, params)
    if log_total > 700:
        return math.inf
    if log_total < -700:
        return math.exp(log_total)
    return math.fsum(c * params.z ** n * math.exp(k * params.J) for (n, k), c in poly.items())


def enumerate_log_Z(region, params, bc, sources=(), orientations=None) -> float:
    return evaluate_log(count_polynomial(region, bc, sources, orientations), params)


def enumerate_Z(region, params, bc, sources=(), orientations=None) -> float:
    """Partition function by exhaustive enumeration (sources forced occupied)."""
    return evaluate(count_polynomial(region, bc, sources, orientations), params)


def correlation(region, params, bc, upsilon=()) -> float:
    """Probability that every edge of ``upsilon`` is occupied."""
    upsilon = tuple(upsilon)
    if not upsilon:
        return 1.0
    num = enumerate_log_Z(region, params, bc, upsilon)
    if num == -math.inf:
        return 0.0
    return math.exp(num - enumerate_log_Z(region, params, bc))


def edge_occupations(region, params, bc, edges=None) -> dict:
    """Exact single-edge occupation probabilities from one enumeration."""
    edges = list(edges) if edges is not None else region.edges()
    lz = math.log(params.z)
    logs = []
    configs = []
    for dimers, n, k in iter_configurations(region, bc):
        logs.append(n * lz + k * params.J)
        configs.append(dimers)
    logs = np.array(logs)
    w = np.exp(logs - logs.max())
    total = w.sum()
    out = {}
    for e in edges:
        out[e] = float(sum(wi for wi, c in zip(w, configs) if e in c) / total)
    return out


def _segment_vectors(seg, bc: BoundaryCondition, params: ModelParams):
    lo, hi = seg.end_edges()
    mag = magnetized_vector(params)
    left = mag if lo in bc.magnetized else open_vector()
    right = mag if hi in bc.magnetized else open_vector()
    return left, right


def oriented_log_Z(region: Region, params: ModelParams, bc: BoundaryCondition, c=None) -> float:
    """log partition function of the model restricted to one orientation.

    The orientation is ``bc.q`` unless ``c`` is given. Lines are independent:
    each maximal run along the orientation is an exactly solved chain, with a
    magnetized end wherever the outgoing edge on that line is magnetized.
    """
    c = bc.q if c is None else Orientation.parse(c)
    bc.validate(region)
    if not len(region):
        return 0.0
    sol = solve(params)
    total = 0.0
    for seg in segments(region, c):
        left, right = _segment_vectors(seg, bc, params)
        total += log_psi(sol, len(seg), left, right)
    return total


def oriented_Z(region: Region, params: ModelParams, bc: BoundaryCondition, c=None) -> float:
    return math.exp(oriented_log_Z(region, params, bc, c))
