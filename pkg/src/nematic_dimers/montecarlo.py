"""Metropolis sampling of the interacting dimer measure on finite regions.

Moves are single-edge insertions and deletions. A proposal picks an edge
uniformly; an occupied edge is proposed for deletion, an admissible edge
with both endpoints free for insertion, anything else is rejected. The
acceptance ratio is local: z, the collinear neighbours at distance one, and
contacts with magnetized boundary edges.

The hot loop is compiled with numba. A pure-Python step consuming the same
random stream is kept for audits and tests.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from . import gibbs
from .errors import ValidationError
from .gibbs import BoundaryCondition, collinear_neighbours, touching_parallels
from .lattice import Edge, Orientation, Region, Site, oriented_boundary, segments
from .transfer1d import ModelParams

RNG_NAME = "numpy.random.Philox(SeedSequence(seed))"
MIN_BINS = 16


@dataclass
class SamplerConfig:
    region: Region
    params: ModelParams
    bc: BoundaryCondition
    seed: int = 0
    sweeps: int = 10_000
    thermalization: int = 1_000
    bin_size: int = 100
    init: str = "empty"

    def __post_init__(self):
        if self.sweeps <= 0:
            raise ValidationError("sweeps must be positive")
        if self.thermalization < 0:
            raise ValidationError("thermalization must be non-negative")
        if self.bin_size <= 0 or self.sweeps % self.bin_size:
            raise ValidationError(f"bin_size {self.bin_size} must divide sweeps {self.sweeps}")
        if self.n_bins < MIN_BINS:
            raise ValidationError(f"need at least {MIN_BINS} bins, got {self.n_bins}")
        if self.init not in ("empty", "packed"):
            raise ValidationError(f"init must be 'empty' or 'packed', got {self.init!r}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        self.bc.validate(self.region)

    @property
    def n_bins(self) -> int:
        return self.sweeps // self.bin_size

    def rng(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(self.seed))))

    def metadata(self) -> dict:
        return {
            "rng": RNG_NAME,
            "seed": int(self.seed),
            "sweeps": self.sweeps,
            "thermalization": self.thermalization,
            "bin_size": self.bin_size,
            "bins": self.n_bins,
            "init": self.init,
            "move_set": "single-edge insert/delete Metropolis",
        }


@dataclass
class ObservableEstimate:
    mean: float
    stderr: float
    bins: int

    def to_json(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "bins": self.bins}


class Lattice:
    """Integer tables describing a region for the compiled kernel."""

    def __init__(self, region: Region, bc: BoundaryCondition):
        self.region = region
        self.bc = bc
        self.sites = sorted(region.sites)
        self.site_index = {s: i for i, s in enumerate(self.sites)}
        self.edges = region.edges()
        self.edge_index = {e: i for i, e in enumerate(self.edges)}
        n = len(self.edges)
        self.eu = np.array([self.site_index[e.a] for e in self.edges], dtype=np.int64).reshape(n)
        self.ev = np.array([self.site_index[e.b] for e in self.edges], dtype=np.int64).reshape(n)
        self.coll = np.full((n, 2), -1, dtype=np.int64)
        self.mag = np.zeros(n, dtype=np.int64)
        for i, e in enumerate(self.edges):
            for k, f in enumerate(collinear_neighbours(e)):
                self.coll[i, k] = self.edge_index.get(f, -1)
            self.mag[i] = sum(1 for m in touching_parallels(e) if m in bc.magnetized)
        allowed = set(gibbs.allowed_edges(region, bc))
        self.allowed = np.array([e in allowed for e in self.edges], dtype=np.bool_).reshape(n)

    def index(self, e: Edge) -> int:
        try:
            return self.edge_index[e]
        except KeyError:
            raise ValidationError(f"edge {e} is not inside the region") from None


class Chain:
    """Mutable dimer configuration on a prepared lattice."""

    def __init__(self, lattice: Lattice, params: ModelParams):
        self.lattice = lattice
        self.params = params
        self.log_z = math.log(params.z)
        self.occ = np.zeros(len(lattice.edges), dtype=np.bool_)
        self.used = np.zeros(len(lattice.sites), dtype=np.bool_)

    def configuration(self) -> frozenset:
        return frozenset(self.lattice.edges[i] for i in np.flatnonzero(self.occ))

    def set_configuration(self, dimers) -> None:
        self.occ[:] = False
        self.used[:] = False
        for e in dimers:
            i = self.lattice.index(e)
            if self.used[self.lattice.eu[i]] or self.used[self.lattice.ev[i]]:
                raise ValidationError("dimers overlap")
            if not self.lattice.allowed[i]:
                raise ValidationError(f"dimer {e} is not admissible")
            self._toggle(i)

    def pack(self) -> None:
        """Fill every q-line with q-dimers from its lower-left end."""
        dimers = []
        for seg in segments(self.lattice.region, self.lattice.bc.q):
            for k in range(0, len(seg) - 1, 2):
                dimers.append(Edge(seg.sites[k], seg.sites[k + 1]))
        self.set_configuration(dimers)

    def _toggle(self, i: int) -> None:
        self.occ[i] = not self.occ[i]
        self.used[self.lattice.eu[i]] = self.occ[i]
        self.used[self.lattice.ev[i]] = self.occ[i]

    def interaction_gain(self, i: int) -> int:
        """Interactions a dimer on edge i has with the rest of the configuration."""
        g = int(self.lattice.mag[i])
        for f in self.lattice.coll[i]:
            if f >= 0 and self.occ[f]:
                g += 1
        return g

    def local_log_ratio(self, i: int):
        """log weight(after)/weight(before) of toggling edge i, or None if the move is impossible."""
        lat = self.lattice
        if self.occ[i]:
            return -(self.log_z + self.params.J * self.interaction_gain(i))
        if not lat.allowed[i] or self.used[lat.eu[i]] or self.used[lat.ev[i]]:
            return None
        return self.log_z + self.params.J * self.interaction_gain(i)

    def step(self, rng: np.random.Generator) -> tuple[int, bool]:
        """One proposal; same random-number consumption as the compiled kernel."""
        i = int(rng.random() * len(self.occ))
        log_r = self.local_log_ratio(i)
        if log_r is None:
            return i, False
        if log_r >= 0 or rng.random() < math.exp(log_r):
            self._toggle(i)
            return i, True
        return i, False

    def sweep(self, rng, n_sweeps: int, observables=None, bin_size: int = 1) -> np.ndarray:
        """Run compiled sweeps; returns per-bin means of the observables."""
        obs = _observable_table(observables or [], self.lattice)
        n_bins = n_sweeps // bin_size if len(obs) else 0
        out = np.zeros((n_bins, len(obs)))
        _kernel(
            self.occ, self.used, self.lattice.eu, self.lattice.ev, self.lattice.coll,
            self.lattice.mag, self.lattice.allowed, self.log_z, float(self.params.J),
            n_sweeps, obs, bin_size, out, rng,
        )
        return out


def _observable_table(observables, lattice: Lattice) -> np.ndarray:
    """Each observable is a product of one or two edge indicators."""
    rows = []
    for ob in observables:
        ob = tuple(ob)
        if not 1 <= len(ob) <= 2:
            raise ValidationError("observables are products of one or two edge indicators")
        idx = [lattice.index(e) for e in ob]
        rows.append(idx + [-1] * (2 - len(idx)))
    return np.array(rows, dtype=np.int64).reshape(len(rows), 2)


@numba.njit(nogil=True, cache=True)
def _kernel(occ, used, eu, ev, coll, mag, allowed, log_z, J, n_sweeps, obs, bin_size, out, rng):
    n_e = occ.shape[0]
    n_obs = obs.shape[0]
    for sweep in range(n_sweeps):
        for _ in range(n_e):
            i = int(rng.random() * n_e)
            if occ[i]:
                g = mag[i]
                for k in range(2):
                    f = coll[i, k]
                    if f >= 0 and occ[f]:
                        g += 1
                log_r = -(log_z + J * g)
            else:
                if not allowed[i] or used[eu[i]] or used[ev[i]]:
                    continue
                g = mag[i]
                for k in range(2):
                    f = coll[i, k]
                    if f >= 0 and occ[f]:
                        g += 1
                log_r = log_z + J * g
            if log_r >= 0 or rng.random() < math.exp(log_r):
                occ[i] = not occ[i]
                used[eu[i]] = occ[i]
                used[ev[i]] = occ[i]
        if n_obs:
            b = sweep // bin_size
            if b < out.shape[0]:
                for j in range(n_obs):
                    a = obs[j, 0]
                    c = obs[j, 1]
                    if occ[a] and (c < 0 or occ[c]):
                        out[b, j] += 1.0
    if n_obs:
        for b in range(out.shape[0]):
            for j in range(n_obs):
                out[b, j] /= bin_size


def run_chain(cfg: SamplerConfig, observables) -> np.ndarray:
    """Thermalize, then return per-bin means (bins x observables)."""
    lattice = Lattice(cfg.region, cfg.bc)
    chain = Chain(lattice, cfg.params)
    if cfg.init == "packed":
        chain.pack()
    rng = cfg.rng()
    if cfg.thermalization:
        chain.sweep(rng, cfg.thermalization)
    return chain.sweep(rng, cfg.sweeps, observables, cfg.bin_size)


def binned_estimate(bins: np.ndarray) -> ObservableEstimate:
    n = len(bins)
    return ObservableEstimate(float(bins.mean()), float(bins.std(ddof=1) / math.sqrt(n)), n)


def jackknife_connected(ab: np.ndarray, a: np.ndarray, b: np.ndarray) -> ObservableEstimate:
    """<AB> - <A><B> with a leave-one-bin-out jackknife error."""
    n = len(ab)
    full = ab.mean() - a.mean() * b.mean()
    sa, sb, sab = a.sum(), b.sum(), ab.sum()
    loo = (sab - ab) / (n - 1) - ((sa - a) / (n - 1)) * ((sb - b) / (n - 1))
    var = (n - 1) / n * ((loo - loo.mean()) ** 2).sum()
    return ObservableEstimate(float(full), float(math.sqrt(var)), n)


def estimate(cfg: SamplerConfig, edges=(), pairs=()) -> dict:
    """Occupations of ``edges`` and connected correlations of ``pairs`` from one chain.

    Keys are edges for occupations and (e, e2) tuples for pairs.
    """
    edges = list(edges)
    pairs = [tuple(p) for p in pairs]
    singles = list(dict.fromkeys(edges + [e for p in pairs for e in p]))
    observables = [(e,) for e in singles] + [p for p in pairs]
    bins = run_chain(cfg, observables)
    col = {e: bins[:, k] for k, e in enumerate(singles)}
    out: dict = {}
    for e in edges:
        out[e] = binned_estimate(col[e])
    for k, p in enumerate(pairs):
        out[p] = jackknife_connected(bins[:, len(singles) + k], col[p[0]], col[p[1]])
    return out


def estimate_occupation(cfg: SamplerConfig, edge: Edge) -> ObservableEstimate:
    return estimate(cfg, edges=[edge])[edge]


def estimate_pair(cfg: SamplerConfig, e: Edge, e2: Edge) -> ObservableEstimate:
    return estimate(cfg, pairs=[(e, e2)])[(e, e2)]


def merge_estimates(estimates) -> ObservableEstimate:
    """Inverse-variance weighted mean of independent estimates."""
    estimates = list(estimates)
    if not estimates:
        raise ValidationError("nothing to merge")
    errs = np.array([x.stderr for x in estimates])
    means = np.array([x.mean for x in estimates])
    bins = sum(x.bins for x in estimates)
    if (errs == 0).any():
        # zero-variance chains dominate; fall back to their plain mean
        exact = means[errs == 0]
        return ObservableEstimate(float(exact.mean()), 0.0, bins)
    w = 1.0 / errs ** 2
    return ObservableEstimate(float((w * means).sum() / w.sum()), float(1.0 / math.sqrt(w.sum())), bins)


def run_seeds(cfg: SamplerConfig, seeds, edges=(), pairs=(), threads: int = 1) -> tuple[list, dict]:
    """Independent chains for each seed; returns (per-seed results, merged results)."""
    configs = [SamplerConfig(cfg.region, cfg.params, cfg.bc, int(s), cfg.sweeps,
                             cfg.thermalization, cfg.bin_size, cfg.init) for s in seeds]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda c: estimate(c, edges, pairs), configs))
    else:
        results = [estimate(c, edges, pairs) for c in configs]
    merged = {k: merge_estimates(r[k] for r in results) for k in results[0]} if results else {}
    return results, merged


def detailed_balance_audit(region: Region, params: ModelParams, bc: BoundaryCondition,
                           n_transitions: int = 10_000, seed: int = 0) -> float:
    """Largest relative gap between the local acceptance ratio and the ratio of
    full weight recomputations over random feasible transitions."""
    lattice = Lattice(region, bc)
    chain = Chain(lattice, params)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    worst = 0.0
    done = 0
    before = gibbs.log_weight(chain.configuration(), params, bc)
    while done < n_transitions:
        i = int(rng.integers(len(lattice.edges)))
        log_r = chain.local_log_ratio(i)
        if log_r is None:
            continue
        chain._toggle(i)
        after_config = chain.configuration()
        if not gibbs.admissible(after_config, bc, region):
            raise AssertionError(f"move on {lattice.edges[i]} left the admissible set")
        after = gibbs.log_weight(after_config, params, bc)
        worst = max(worst, abs(math.expm1(log_r - (after - before))))
        done += 1
        # random walk through configuration space, biased by the chain itself
        if rng.random() < 0.5:
            chain._toggle(i)
        else:
            before = after
    return worst


def central_edge(region: Region, orientation, offset=(0, 0)) -> Edge:
    """Edge near the centre of the bounding box, shifted by ``offset``."""
    o = Orientation.parse(orientation)
    x0, y0, x1, y1 = region.bounding_box()
    cx, cy = (x0 + x1 + 1) // 2, (y0 + y1 + 1) // 2
    if o is Orientation.V:
        start = Site(cx + offset[0], cy - 1 + offset[1])
    else:
        start = Site(cx - 1 + offset[0], cy + offset[1])
    e = Edge.from_site(start, o)
    if e.a not in region or e.b not in region:
        raise ValidationError(f"edge {e} is outside the region")
    return e


@dataclass
class ScanRow:
    L: int
    z: float
    J: float
    occ_v: ObservableEstimate
    occ_h: ObservableEstimate
    meta: dict = field(default_factory=dict)

    @property
    def epsilon(self) -> float:
        return 1.0 / math.sqrt(self.z * math.exp(self.J))

    @property
    def ratio(self) -> float:
        return self.occ_h.mean / self.occ_v.mean if self.occ_v.mean else math.inf

    @property
    def deviation(self) -> float:
        return abs(self.occ_v.mean - 0.5)

    def to_json(self) -> dict:
        return {
            "L": self.L, "z": self.z, "J": self.J, "epsilon": self.epsilon,
            "occ_v": self.occ_v.mean, "occ_v_stderr": self.occ_v.stderr,
            "occ_h": self.occ_h.mean, "occ_h_stderr": self.occ_h.stderr,
            "ratio_h_over_v": self.ratio, "abs_occ_v_minus_half": self.deviation,
            "bins": self.occ_v.bins,
        }


def nematic_scan(boxes, grid, q="v", ell0: int = 0, sweeps: int = 20_000, thermalization: int = 2_000,
                 bin_size: int = 500, seed: int = 0, magnetized: str = "none", init: str = "packed",
                 threads: int = 1) -> list:
    """Central vertical and horizontal occupations for each box size and (z, J).

    ``magnetized`` is "none" or "q" (all boundary edges along q attract).
    """
    if magnetized not in ("none", "q"):
        raise ValidationError(f"magnetized must be 'none' or 'q', got {magnetized!r}")
    jobs = []
    for L in boxes:
        region = Region.rect(L, L)
        bc = BoundaryCondition(q, frozenset(), ell0)
        if magnetized == "q":
            bc = BoundaryCondition(q, oriented_boundary(region, bc.q), ell0)
        ev, eh = central_edge(region, "v"), central_edge(region, "h")
        for z, J in grid:
            cfg = SamplerConfig(region, ModelParams(z, J), bc, seed, sweeps, thermalization, bin_size, init)
            jobs.append((L, cfg, ev, eh))

    def run(job):
        L, cfg, ev, eh = job
        res = estimate(cfg, edges=[ev, eh])
        return ScanRow(L, float(cfg.params.z), float(cfg.params.J), res[ev], res[eh], cfg.metadata())

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run, jobs))
    return [run(j) for j in jobs]
