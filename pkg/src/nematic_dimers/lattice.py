"""Square-lattice geometry: sites, oriented edges, regions, q-distance, segments."""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass
from typing import Iterable, NamedTuple


class Orientation(enum.Enum):
    H = "h"
    V = "v"

    @property
    def opposite(self) -> "Orientation":
        return Orientation.V if self is Orientation.H else Orientation.H

    @property
    def step(self) -> tuple[int, int]:
        """Unit vector along lines of this orientation."""
        return (1, 0) if self is Orientation.H else (0, 1)

    @classmethod
    def parse(cls, value) -> "Orientation":
        if isinstance(value, Orientation):
            return value
        return cls(str(value).lower())

    def __str__(self) -> str:
        return self.value


H = Orientation.H
V = Orientation.V


class Site(NamedTuple):
    x: int
    y: int

    def shifted(self, dx: int, dy: int) -> "Site":
        return Site(self.x + dx, self.y + dy)


@functools.total_ordering
class _Infinity:
    """The distance between points that do not share a line."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __eq__(self, other):
        return other is self

    def __lt__(self, other):
        return False

    def __gt__(self, other):
        return other is not self

    def __hash__(self):
        return hash("lattice.INFINITY")

    def __repr__(self):
        return "INFINITY"


INFINITY = _Infinity()


@dataclass(frozen=True, order=True)
class Edge:
    """A nearest-neighbour pair of sites, stored with ``a < b``."""

    a: Site
    b: Site

    def __post_init__(self):
        a, b = Site(*self.a), Site(*self.b)
        if abs(a.x - b.x) + abs(a.y - b.y) != 1:
            raise ValueError(f"sites {a} and {b} are not nearest neighbours")
        if b < a:
            a, b = b, a
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def from_site(cls, site, orientation: Orientation) -> "Edge":
        dx, dy = orientation.step
        s = Site(*site)
        return cls(s, s.shifted(dx, dy))

    @property
    def orientation(self) -> Orientation:
        return H if self.a.y == self.b.y else V

    @property
    def sites(self) -> tuple[Site, Site]:
        return (self.a, self.b)

    def translated(self, dx: int, dy: int) -> "Edge":
        return Edge(self.a.shifted(dx, dy), self.b.shifted(dx, dy))

    def to_json(self) -> list:
        return [[self.a.x, self.a.y], [self.b.x, self.b.y]]

    def __repr__(self):
        return f"Edge(({self.a.x},{self.a.y})-({self.b.x},{self.b.y}))"


_NEIGHBOUR_STEPS = ((1, 0), (-1, 0), (0, 1), (0, -1))


def neighbours(site: Site) -> list[Site]:
    return [Site(site.x + dx, site.y + dy) for dx, dy in _NEIGHBOUR_STEPS]


@dataclass(frozen=True)
class Region:
    """A finite set of lattice sites."""

    sites: frozenset

    def __post_init__(self):
        object.__setattr__(self, "sites", frozenset(Site(*s) for s in self.sites))

    @classmethod
    def rect(cls, width: int, height: int, x0: int = 0, y0: int = 0) -> "Region":
        return cls(frozenset(Site(x0 + i, y0 + j) for i in range(width) for j in range(height)))

    def __contains__(self, site) -> bool:
        return site in self.sites

    def __len__(self) -> int:
        return len(self.sites)

    def __iter__(self):
        return iter(sorted(self.sites))

    def __or__(self, other: "Region") -> "Region":
        return Region(self.sites | other.sites)

    def __and__(self, other: "Region") -> "Region":
        return Region(self.sites & other.sites)

    def __sub__(self, other: "Region") -> "Region":
        return Region(self.sites - other.sites)

    def edges(self) -> list[Edge]:
        """All edges with both endpoints in the region, sorted."""
        out = []
        for s in sorted(self.sites):
            for dx, dy in ((1, 0), (0, 1)):
                t = Site(s.x + dx, s.y + dy)
                if t in self.sites:
                    out.append(Edge(s, t))
        return out

    def translated(self, dx: int, dy: int) -> "Region":
        return Region(frozenset(s.shifted(dx, dy) for s in self.sites))

    def bounding_box(self) -> tuple[int, int, int, int]:
        xs = [s.x for s in self.sites]
        ys = [s.y for s in self.sites]
        return min(xs), min(ys), max(xs), max(ys)

    def diameter(self) -> int:
        """Largest Euclidean extent along a lattice line."""
        if not self.sites:
            return 0
        x0, y0, x1, y1 = self.bounding_box()
        return max(x1 - x0, y1 - y0) + 1

    def to_json(self) -> dict:
        return {"sites": [[s.x, s.y] for s in sorted(self.sites)]}


@dataclass(frozen=True)
class Segment:
    """A maximal run of consecutive region sites along one lattice line."""

    orientation: Orientation
    sites: tuple

    def __len__(self) -> int:
        return len(self.sites)

    @property
    def first(self) -> Site:
        """Lower-left-most site."""
        return self.sites[0]

    @property
    def last(self) -> Site:
        """Upper-right-most site."""
        return self.sites[-1]

    def end_edges(self) -> tuple[Edge, Edge]:
        """The two edges along the line that leave the segment."""
        dx, dy = self.orientation.step
        return (
            Edge(self.first.shifted(-dx, -dy), self.first),
            Edge(self.last, self.last.shifted(dx, dy)),
        )


def q_distance(p, r, c: Orientation):
    """Distance between two points along a ``c``-line, or ``INFINITY``."""
    p, r = Site(*p), Site(*r)
    if c is V:
        return abs(p.y - r.y) if p.x == r.x else INFINITY
    return abs(p.x - r.x) if p.y == r.y else INFINITY


def set_q_distance(ps: Iterable, rs: Iterable, c: Orientation):
    """Smallest ``c``-distance between elements of two point sets."""
    rs = list(rs)
    best = INFINITY
    for p in ps:
        for r in rs:
            d = q_distance(p, r, c)
            if d < best:
                best = d
    return best


def edge_points(edges: Iterable[Edge]) -> set[Site]:
    pts = set()
    for e in edges:
        pts.add(e.a)
        pts.add(e.b)
    return pts


def segments(region: Region, c: Orientation) -> list[Segment]:
    """Split a region into maximal runs along ``c``-lines."""
    if c is V:
        key = lambda s: (s.x, s.y)
    else:
        key = lambda s: (s.y, s.x)
    out: list[Segment] = []
    run: list[Site] = []
    for s in sorted(region.sites, key=key):
        if run:
            prev = run[-1]
            line_prev, pos_prev = key(prev)
            line, pos = key(s)
            if line != line_prev or pos != pos_prev + 1:
                out.append(Segment(c, tuple(run)))
                run = []
        run.append(s)
    if run:
        out.append(Segment(c, tuple(run)))
    return out


def boundary(region: Region) -> frozenset:
    """Edges with exactly one endpoint in the region."""
    out = set()
    for s in region.sites:
        for t in neighbours(s):
            if t not in region.sites:
                out.add(Edge(s, t))
    return frozenset(out)


def oriented_boundary(region: Region, c: Orientation) -> frozenset:
    return frozenset(e for e in boundary(region) if e.orientation is c)


def components(sites: Iterable[Site]) -> list[frozenset]:
    """4-connected components of a site set."""
    remaining = set(Site(*s) for s in sites)
    out = []
    while remaining:
        start = remaining.pop()
        comp = {start}
        stack = [start]
        while stack:
            s = stack.pop()
            for t in neighbours(s):
                if t in remaining:
                    remaining.remove(t)
                    comp.add(t)
                    stack.append(t)
        out.append(frozenset(comp))
    return out


def filled(sites: Iterable[Site]) -> frozenset:
    """The set together with every finite complementary component (holes)."""
    sites = frozenset(Site(*s) for s in sites)
    if not sites:
        return sites
    xs = [s.x for s in sites]
    ys = [s.y for s in sites]
    x0, x1, y0, y1 = min(xs) - 1, max(xs) + 1, min(ys) - 1, max(ys) + 1
    # flood the complement from a corner of the padded box
    outside = {Site(x0, y0)}
    stack = [Site(x0, y0)]
    while stack:
        s = stack.pop()
        for t in neighbours(s):
            if x0 <= t.x <= x1 and y0 <= t.y <= y1 and t not in sites and t not in outside:
                outside.add(t)
                stack.append(t)
    return frozenset(
        Site(x, y)
        for x in range(x0, x1 + 1)
        for y in range(y0, y1 + 1)
        if Site(x, y) not in outside
    )


def is_simply_connected(sites: Iterable[Site]) -> bool:
    """True when the complement of a non-empty finite set is connected."""
    sites = frozenset(Site(*s) for s in sites)
    return bool(sites) and filled(sites) == sites


def parse_region(obj) -> Region:
    """Build a region from ``{"sites": [[x, y], ...]}`` or ``{"rect": [w, h]}``."""
    if not isinstance(obj, dict):
        raise ValueError("region literal must be a JSON object")
    keys = set(obj)
    if keys == {"rect"}:
        w, h = obj["rect"]
        if int(w) < 0 or int(h) < 0:
            raise ValueError("rect dimensions must be non-negative")
        return Region.rect(int(w), int(h))
    if keys == {"sites"}:
        return Region(frozenset(Site(int(x), int(y)) for x, y in obj["sites"]))
    raise ValueError(f"region literal needs exactly one of 'sites' or 'rect', got {sorted(keys)}")


def parse_edge(obj) -> Edge:
    """Edge literal: ``[[x0, y0], [x1, y1]]`` or ``[x, y, "h"|"v"]``."""
    if len(obj) == 3:
        x, y, o = obj
        return Edge.from_site(Site(int(x), int(y)), Orientation.parse(o))
    (x0, y0), (x1, y1) = obj
    return Edge(Site(int(x0), int(y0)), Site(int(x1), int(y1)))
