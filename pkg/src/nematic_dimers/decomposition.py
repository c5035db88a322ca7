"""Loops, mantles, paddings and contours of a dimer configuration.

Starting from the favoured orientation q, the sites covered by opposite
dimers split into 4-connected clusters; the boundary of each cluster's filled
hull is a loop. A loop of index c has a rim (the mantle) that must be packed
with c-dimers and an inner part (the core) that is free. Inside a loop the
roles of the orientations swap and the construction recurses, producing an
alternating family of nested loops.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import gibbs
from .errors import StructuralError, ValidationError
from .lattice import (
    Edge, Orientation, Region, Segment, Site, boundary, components, filled,
    segments,
)
from .transfer1d import ModelParams


@dataclass(frozen=True)
class Loop:
    """The boundary of a simply connected site set, with an orientation index."""

    interior: frozenset
    index: Orientation | None = None
    edges: frozenset = field(default=frozenset(), compare=False, repr=False)

    def __post_init__(self):
        sites = frozenset(Site(*s) for s in self.interior)
        if not sites:
            raise ValidationError("a loop needs a non-empty interior")
        if len(components(sites)) != 1 or filled(sites) != sites:
            raise ValidationError("loop interior must be connected and simply connected")
        object.__setattr__(self, "interior", sites)
        if self.index is not None:
            object.__setattr__(self, "index", Orientation.parse(self.index))
        object.__setattr__(self, "edges", boundary(Region(sites)))

    def with_index(self, c) -> "Loop":
        return Loop(self.interior, Orientation.parse(c))

    def contains(self, other: "Loop") -> bool:
        return other.interior < self.interior

    def to_json(self) -> dict:
        return {
            "index": None if self.index is None else str(self.index),
            "interior": [[s.x, s.y] for s in sorted(self.interior)],
            "edges": [e.to_json() for e in sorted(self.edges)],
        }


def support_of(config: Iterable[Edge], c) -> Region:
    """Sites covered by c-dimers."""
    c = Orientation.parse(c)
    return Region(frozenset(s for e in config if e.orientation is c for s in e.sites))


def outer_loops(region: Region) -> list[Loop]:
    """Loops around the clusters of ``region`` that are not nested in another."""
    hulls = [filled(comp) for comp in components(region.sites)]
    out = []
    for i, h in enumerate(hulls):
        if any(j != i and h < other for j, other in enumerate(hulls)):
            continue
        out.append(Loop(h))
    return sorted(out, key=lambda l: min(l.interior))


def _source_sites(sources) -> set[Site]:
    return {s for e in sources for s in e.sites}


def core(loop: Loop, c=None, sources: Iterable[Edge] = ()) -> Region:
    """Interior sites at c-distance >= 2 from the loop's c-edges and off its other edges."""
    c = Orientation.parse(c) if c is not None else loop.index
    if c is None:
        raise ValidationError("core needs an orientation")
    dx, dy = c.step
    c_points = set()
    other_points = set()
    for e in loop.edges:
        (c_points if e.orientation is c else other_points).update(e.sites)
    excluded = _source_sites(sources)
    out = set()
    for x in loop.interior:
        if x in excluded or x in other_points:
            continue
        near = (x, x.shifted(dx, dy), x.shifted(-dx, -dy))
        if any(p in c_points for p in near):
            continue
        out.add(x)
    return Region(frozenset(out))


def mantle(loop: Loop, c=None) -> Region:
    """Interior minus the source-free core."""
    return Region(loop.interior - core(loop, c).sites)


def mantle_tiling(loop: Loop, c=None) -> frozenset | None:
    """The close packing of the mantle by c-dimers, or None if there is none.

    Along each c-line the mantle splits into runs, and a run of consecutive
    sites has a perfect matching by collinear dimers iff its length is even,
    in which case the matching is unique.
    """
    c = Orientation.parse(c) if c is not None else loop.index
    dx, dy = c.step
    tiles = set()
    for seg in segments(mantle(loop, c), c):
        if len(seg) % 2:
            return None
        for i in range(0, len(seg), 2):
            tiles.add(Edge(seg.sites[i], seg.sites[i + 1]))
    return frozenset(tiles)


def is_bounding(loop: Loop, c=None, sources: Iterable[Edge] = ()) -> bool:
    c = Orientation.parse(c) if c is not None else loop.index
    m = mantle(loop, c).sites
    if m & _source_sites(sources):
        return False
    return mantle_tiling(loop, c) is not None


def log_mantle_weight(loop: Loop, params: ModelParams, sources: Iterable[Edge] = ()) -> float:
    """Closed form for the weight of the packed mantle.

    Each run of 2m sites along the index orientation holds m dimers with m-1
    contacts, so the total is (z e^J)^{|O|/2} e^{-J |boundary c-edges|/2};
    every boundary c-edge that continues into a parallel source adds e^J.
    """
    c = loop.index
    m = mantle(loop, c)
    bc_edges = [e for e in boundary(m) if e.orientation is c]
    src_edges = {f for s in sources if s.orientation is c for f in boundary(Region(frozenset(s.sites))) if f.orientation is c}
    touching = sum(1 for e in bc_edges if e in src_edges)
    return 0.5 * len(m) * (math.log(params.z) + params.J) - 0.5 * params.J * len(bc_edges) + params.J * touching


def mantle_weight(loop: Loop, params: ModelParams, sources: Iterable[Edge] = ()) -> float:
    return math.exp(log_mantle_weight(loop, params, sources))


def log_mantle_weight_direct(loop: Loop, params: ModelParams, sources: Iterable[Edge] = ()) -> float:
    """Weight of the explicit mantle tiling, sources counted as fixed neighbours."""
    tiles = mantle_tiling(loop)
    if tiles is None:
        raise StructuralError("mantle has no close packing")
    srcs = frozenset(sources)
    k = gibbs.interaction_count(tiles | srcs) - gibbs.interaction_count(srcs)
    return len(tiles) * math.log(params.z) + params.J * k


@dataclass(frozen=True)
class LoopFamily:
    loops: tuple
    parents: tuple  # index of the parent loop, -1 for the root
    root_orientation: Orientation

    def key(self) -> frozenset:
        return frozenset((l.interior, l.index) for l in self.loops)

    def children(self, i: int) -> list[int]:
        return [j for j, p in enumerate(self.parents) if p == i]

    def is_alternating(self) -> bool:
        for l, p in zip(self.loops, self.parents):
            parent_index = self.root_orientation if p < 0 else self.loops[p].index
            if l.index is not parent_index.opposite:
                return False
        return True

    def to_json(self) -> dict:
        return {
            "root_orientation": str(self.root_orientation),
            "loops": [l.to_json() for l in self.loops],
            "parents": list(self.parents),
        }


def inclusion_parents(loops: list[Loop]) -> list[int]:
    """Parent of each loop: the smallest loop strictly containing it."""
    out = []
    for l in loops:
        best, size = -1, None
        for j, m in enumerate(loops):
            if m.contains(l) and (size is None or len(m.interior) < size):
                best, size = j, len(m.interior)
        out.append(best)
    return out


def build_loop_family(config: Iterable[Edge], q, sources: Iterable[Edge] = ()) -> LoopFamily:
    """Nested bounding loops of a configuration with favoured orientation q."""
    q = Orientation.parse(q)
    config = frozenset(config)
    sources = frozenset(sources)
    loops: list[Loop] = []
    parents: list[int] = []

    def rec(dimers: frozenset, sea: Orientation, parent: int):
        c = sea.opposite
        supp = support_of(dimers, c)
        if not len(supp):
            return
        for raw in outer_loops(supp):
            loop = raw.with_index(c)
            tiles = mantle_tiling(loop)
            m = mantle(loop).sites
            if tiles is None or m & _source_sites(sources):
                raise StructuralError(f"loop around {sorted(loop.interior)[:4]}... is not {c}-bounding")
            if not tiles <= dimers:
                raise StructuralError("mantle is not packed by dimers of the configuration")
            idx = len(loops)
            loops.append(loop)
            parents.append(parent)
            inner = frozenset(d for d in dimers if d.a in loop.interior and d.b in loop.interior)
            rec(inner, c, idx)

    rec(config, q, -1)
    return LoopFamily(tuple(loops), tuple(parents), q)


def validate_family(family: LoopFamily) -> None:
    """Check disjointness of loops and mantles, tree consistency and alternation."""
    loops = family.loops
    mantles = [mantle(l).sites for l in loops]
    for i in range(len(loops)):
        for j in range(i + 1, len(loops)):
            if loops[i].edges & loops[j].edges:
                raise StructuralError("loops share edges")
            if mantles[i] & mantles[j]:
                raise StructuralError("mantles overlap")
            a, b = loops[i].interior, loops[j].interior
            if a & b and not (a < b or b < a):
                raise StructuralError("loop interiors cross")
    if list(family.parents) != inclusion_parents(list(loops)):
        raise StructuralError("parent links disagree with containment")
    if not family.is_alternating():
        raise StructuralError("inclusion tree is not alternating")


def padding(family: LoopFamily, i: int, sources: Iterable[Edge] = ()) -> Region:
    """Core of loop i minus the interiors of every other loop."""
    loop = family.loops[i]
    others = set()
    for j, l in enumerate(family.loops):
        if j != i:
            others |= l.interior
    return Region(core(loop, loop.index, sources).sites - others)


def padding_magnetized(family: LoopFamily, i: int, pad: Region) -> frozenset:
    """Core boundary edges along the loop's index that leave the padding."""
    loop = family.loops[i]
    edges = {e for e in boundary(core(loop)) if e.orientation is loop.index}
    return frozenset(edges & boundary(pad))


def exterior(region: Region, family: LoopFamily, sources: Iterable[Edge] = ()) -> Region:
    inside = set()
    for l in family.loops:
        inside |= l.interior
    return Region(region.sites - inside - _source_sites(sources))


@dataclass(frozen=True)
class Contour:
    loops: tuple  # indices into the family
    segments: tuple  # short segments linking them

    def to_json(self, family: LoopFamily) -> dict:
        return {
            "loops": list(self.loops),
            "segments": [
                {"orientation": str(s.orientation), "sites": [[x.x, x.y] for x in s.sites]}
                for s in self.segments
            ],
        }


def family_segments(region: Region, family: LoopFamily, sources: Iterable[Edge] = ()) -> list[Segment]:
    """Segments of the exterior along q and of every padding along its loop's index."""
    out = list(segments(exterior(region, family, sources), family.root_orientation))
    for i, l in enumerate(family.loops):
        out.extend(segments(padding(family, i, sources), l.index))
    return out


def contours(family: LoopFamily, ell0: int, region: Region, sources: Iterable[Edge] = ()) -> list[Contour]:
    """Group loops linked by touching mantles or by segments shorter than ell0."""
    n = len(family.loops)
    if n == 0:
        return []
    mantle_edges = [boundary(mantle(l)) for l in family.loops]
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        parent[find(a)] = find(b)

    for i in range(n):
        for j in range(i + 1, n):
            if mantle_edges[i] & mantle_edges[j]:
                union(i, j)
    links: list[tuple[Segment, list[int]]] = []
    for seg in family_segments(region, family, sources):
        if len(seg) >= ell0:
            continue
        ends = set(seg.end_edges())
        touched = [i for i in range(n) if ends & mantle_edges[i]]
        if touched:
            links.append((seg, touched))
            for a in touched[1:]:
                union(touched[0], a)
    groups = defaultdict(list)
    for i in range(n):
        groups[find(i)].append(i)
    out = []
    for members in groups.values():
        segs = tuple(s for s, t in links if find(t[0]) == find(members[0]))
        out.append(Contour(tuple(sorted(members)), segs))
    return sorted(out, key=lambda c: c.loops)


def external_contours(contour_list: list[Contour], family: LoopFamily) -> list[Contour]:
    """Drop every contour having a loop nested inside a loop of another contour."""
    keep = []
    for g in contour_list:
        nested = any(
            family.loops[j].contains(family.loops[i])
            for h in contour_list if h is not g
            for i in g.loops for j in h.loops
        )
        if not nested:
            keep.append(g)
    return keep


@dataclass
class FactorizationReport:
    configurations: int
    families: int
    max_rel_discrepancy: float
    per_family: list  # (family, log grouped weight, log product form)

    def passed(self, tol: float = 1e-9) -> bool:
        return self.max_rel_discrepancy < tol


def log_product_form(region: Region, params: ModelParams, bc: gibbs.BoundaryCondition, family: LoopFamily) -> float:
    """Mantle weights times oriented partition functions of paddings and exterior."""
    total = 0.0
    for i, l in enumerate(family.loops):
        total += log_mantle_weight(l, params)
        pad = padding(family, i)
        if len(pad):
            inner_bc = gibbs.BoundaryCondition(l.index, padding_magnetized(family, i, pad), bc.ell0)
            total += gibbs.oriented_log_Z(pad, params, inner_bc)
    ext = exterior(region, family)
    if len(ext):
        ext_bc = gibbs.BoundaryCondition(bc.q, bc.magnetized & boundary(ext), bc.ell0)
        total += gibbs.oriented_log_Z(ext, params, ext_bc)
    return total


def verify_loop_factorization(region: Region, params: ModelParams, bc: gibbs.BoundaryCondition) -> FactorizationReport:
    """Group admissible configurations by loop family and compare each group's
    weight with the product form."""
    if any(e.orientation is not bc.q for e in bc.magnetized):
        raise ValidationError("factorization check supports magnetized edges along q only")
    lz = math.log(params.z)
    groups: dict = {}
    fams: dict = {}
    count = 0
    for dimers, n, k in gibbs.iter_configurations(region, bc):
        fam = build_loop_family(dimers, bc.q)
        key = fam.key()
        groups.setdefault(key, []).append(n * lz + k * params.J)
        fams.setdefault(key, fam)
        count += 1
    worst = 0.0
    per = []
    for key, logs in groups.items():
        arr = np.array(logs)
        m = arr.max()
        lhs = float(m + math.log(np.exp(arr - m).sum()))
        rhs = log_product_form(region, params, bc, fams[key])
        worst = max(worst, abs(math.expm1(rhs - lhs)))
        per.append((fams[key], lhs, rhs))
    return FactorizationReport(count, len(groups), worst, per)
