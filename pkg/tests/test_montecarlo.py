import math

import numpy as np
import pytest

from nematic_dimers import gibbs
from nematic_dimers.errors import ValidationError
from nematic_dimers.gibbs import BoundaryCondition
from nematic_dimers.lattice import H, V, Edge, Region, boundary
from nematic_dimers.montecarlo import (
    Chain, Lattice, ObservableEstimate, SamplerConfig, central_edge, detailed_balance_audit,
    estimate, estimate_occupation, estimate_pair, jackknife_connected, merge_estimates,
    nematic_scan, run_seeds,
)
from nematic_dimers.transfer1d import ModelParams


def he(x, y):
    return Edge.from_site((x, y), H)


def ve(x, y):
    return Edge.from_site((x, y), V)


def philox(seed):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def test_config_validation():
    region = Region.rect(3, 3)
    p, bc = ModelParams(1.0, 0.0), BoundaryCondition(V)
    with pytest.raises(ValidationError):
        SamplerConfig(region, p, bc, sweeps=100, bin_size=30)
    with pytest.raises(ValidationError):
        SamplerConfig(region, p, bc, sweeps=100, bin_size=10)  # only 10 bins
    with pytest.raises(ValidationError):
        SamplerConfig(region, p, bc, sweeps=0)
    with pytest.raises(ValidationError):
        SamplerConfig(region, p, bc, init="random")
    assert SamplerConfig(region, p, bc, sweeps=160, bin_size=10).n_bins == 16


def test_step_examples():
    region = Region.rect(6, 6)
    p = ModelParams(0.5, 1.3)
    chain = Chain(Lattice(region, BoundaryCondition(V, ell0=2)), p)
    e = chain.lattice.index(ve(2, 2))
    # insertion into the empty state: ratio z
    assert math.exp(chain.local_log_ratio(e)) == pytest.approx(0.5)
    # deletion of a dimer with two aligned neighbours: e^{-2J}/z
    chain.set_configuration([ve(2, 0), ve(2, 2), ve(2, 4)])
    before = gibbs.log_weight(chain.configuration(), p, chain.lattice.bc)
    after = gibbs.log_weight([ve(2, 0), ve(2, 4)], p, chain.lattice.bc)
    assert chain.local_log_ratio(e) == pytest.approx(-2 * 1.3 - math.log(0.5))
    assert chain.local_log_ratio(e) == pytest.approx(after - before)
    # a horizontal insertion too close to the boundary is never proposed
    assert chain.local_log_ratio(chain.lattice.index(he(2, 1))) is None
    assert chain.local_log_ratio(chain.lattice.index(he(3, 2))) is not None
    # overlapping insertion is impossible
    assert chain.local_log_ratio(chain.lattice.index(ve(2, 1))) is None


def test_step_acceptance_frequency():
    region = Region.rect(1, 2)
    chain = Chain(Lattice(region, BoundaryCondition(V)), ModelParams(0.3, 0.0))
    rng = philox(3)
    accepted = 0
    for _ in range(20000):
        chain.set_configuration([])
        accepted += chain.step(rng)[1]
    # probability min(1, z) for the only edge
    assert accepted / 20000 == pytest.approx(0.3, abs=0.015)


def test_python_step_matches_compiled_kernel():
    region = Region.rect(5, 4)
    mag = frozenset(e for e in boundary(region) if e.orientation is V)
    lat = Lattice(region, BoundaryCondition(V, mag, 1))
    p = ModelParams(2.0, 1.5)
    a, b = Chain(lat, p), Chain(lat, p)
    ra, rb = philox(11), philox(11)
    for _ in range(200):
        for _ in range(len(lat.edges)):
            a.step(ra)
        b.sweep(rb, 1)
        assert (a.occ == b.occ).all()


def test_detailed_balance_audit():
    region = Region.rect(5, 5)
    mag = frozenset(e for e in boundary(region) if e.orientation is V and e.a.y < 0)
    worst = detailed_balance_audit(region, ModelParams(3.0, 2.2), BoundaryCondition(V, mag, 1), 10_000, seed=5)
    assert worst < 1e-12


def test_determinism():
    cfg = SamplerConfig(Region.rect(4, 4), ModelParams(2.0, 1.0), BoundaryCondition(V), seed=42,
                        sweeps=3200, thermalization=100, bin_size=100)
    r1 = estimate(cfg, [ve(1, 1)], [(ve(1, 1), ve(1, 2))])
    r2 = estimate(cfg, [ve(1, 1)], [(ve(1, 1), ve(1, 2))])
    assert r1 == r2
    other = SamplerConfig(cfg.region, cfg.params, cfg.bc, 43, cfg.sweeps, cfg.thermalization, cfg.bin_size)
    assert estimate(other, [ve(1, 1)])[ve(1, 1)] != r1[ve(1, 1)]


@pytest.mark.parametrize("ell0", [0, 1])
def test_every_configuration_reachable_from_empty(ell0):
    region = Region.rect(3, 4)
    bc = BoundaryCondition(V, ell0=ell0)
    lat = Lattice(region, bc)
    chain = Chain(lat, ModelParams(1.0, 1.0))
    n = 0
    for dimers, _, _ in gibbs.iter_configurations(region, bc):
        chain.set_configuration([])
        for d in sorted(dimers):
            i = lat.index(d)
            assert chain.local_log_ratio(i) is not None
            chain._toggle(i)
        assert chain.configuration() == dimers
        n += 1
    assert n == sum(gibbs.count_polynomial(region, bc).values())


@pytest.mark.parametrize("z,J,ell0", [(2.0, 1.0, 0), (0.7, 2.0, 1)])
def test_occupations_match_exact(z, J, ell0):
    region = Region.rect(3, 4)
    bc = BoundaryCondition(V, ell0=ell0)
    p = ModelParams(z, J)
    edges = region.edges()
    exact = gibbs.edge_occupations(region, p, bc, edges)
    cfg = SamplerConfig(region, p, bc, seed=1, sweeps=200_000, thermalization=1000, bin_size=2000)
    res = estimate(cfg, edges)
    misses = 0
    for e in edges:
        est = res[e]
        if est.stderr == 0:
            assert est.mean == exact[e] == 0.0
        elif abs(est.mean - exact[e]) > 3 * est.stderr:
            misses += 1
    assert misses <= 1


def test_small_z_leaves_lattice_empty():
    cfg = SamplerConfig(Region.rect(4, 4), ModelParams(1e-6, 1.0), BoundaryCondition(V), sweeps=16_000, bin_size=1000)
    assert estimate_occupation(cfg, ve(1, 1)).mean < 1e-4


def test_symmetric_edges_agree():
    region = Region.rect(4, 4)
    cfg = SamplerConfig(region, ModelParams(2.0, 1.0), BoundaryCondition(V), seed=7,
                        sweeps=100_000, thermalization=1000, bin_size=1000)
    # mirror images under x -> 3 - x
    a, b = ve(0, 1), ve(3, 1)
    res = estimate(cfg, [a, b])
    assert abs(res[a].mean - res[b].mean) <= 3 * math.hypot(res[a].stderr, res[b].stderr)


def test_pair_with_itself_is_variance():
    region = Region.rect(4, 4)
    cfg = SamplerConfig(region, ModelParams(2.0, 1.0), BoundaryCondition(V), seed=3,
                        sweeps=100_000, thermalization=1000, bin_size=1000)
    e = ve(1, 1)
    res = estimate(cfg, [e], [(e, e)])
    m = res[e].mean
    assert abs(res[(e, e)].mean - m * (1 - m)) <= 3 * res[(e, e)].stderr + 1e-12


def test_pair_matches_exact():
    region = Region.rect(3, 4)
    p = ModelParams(2.0, 1.0)
    bc = BoundaryCondition(V)
    e, f = ve(1, 0), ve(1, 2)
    exact = gibbs.correlation(region, p, bc, [e, f]) - gibbs.correlation(region, p, bc, [e]) * gibbs.correlation(region, p, bc, [f])
    cfg = SamplerConfig(region, p, bc, seed=9, sweeps=200_000, thermalization=1000, bin_size=2000)
    est = estimate_pair(cfg, e, f)
    assert abs(est.mean - exact) <= 3 * est.stderr


def test_jackknife_independent_series():
    rng = np.random.default_rng(0)
    a = rng.random(400)
    b = rng.random(400)
    est = jackknife_connected(a * b, a, b)
    assert abs(est.mean) < 4 * est.stderr
    # identical series: the estimate is the sample variance of the bin means
    same = jackknife_connected(a * a, a, a)
    assert same.mean == pytest.approx((a * a).mean() - a.mean() ** 2)


def test_merge_estimates():
    m = merge_estimates([ObservableEstimate(1.0, 1.0, 16), ObservableEstimate(2.0, 0.5, 16)])
    assert m.mean == pytest.approx((1.0 + 2.0 * 4) / 5)
    assert m.stderr == pytest.approx(1 / math.sqrt(5))
    assert m.bins == 32
    with pytest.raises(ValidationError):
        merge_estimates([])


def test_run_seeds_merges_and_threads_agree():
    cfg = SamplerConfig(Region.rect(3, 3), ModelParams(1.5, 0.5), BoundaryCondition(V),
                        sweeps=1600, thermalization=100, bin_size=100)
    per1, m1 = run_seeds(cfg, [1, 2, 3], edges=[ve(1, 0)])
    per2, m2 = run_seeds(cfg, [1, 2, 3], edges=[ve(1, 0)], threads=2)
    assert per1 == per2 and m1 == m2
    assert m1[ve(1, 0)].bins == 48


def test_central_edges():
    region = Region.rect(20, 20)
    assert central_edge(region, "v") == ve(10, 9)
    assert central_edge(region, "h") == he(9, 10)
    assert central_edge(region, "v", (2, 0)) == ve(12, 9)
    with pytest.raises(ValidationError):
        central_edge(Region.rect(2, 2), "v", (5, 0))


def test_scan_no_preference_at_zero_coupling():
    rows = nematic_scan([6], [(1.0, 0.0)], ell0=0, sweeps=64_000, thermalization=1000, bin_size=1000, seed=2, init="empty")
    r = rows[0]
    assert abs(r.occ_v.mean - r.occ_h.mean) <= 3 * math.hypot(r.occ_v.stderr, r.occ_h.stderr)
    assert r.to_json()["epsilon"] == pytest.approx(1.0)


def test_scan_deviation_shrinks_with_z():
    # odd columns avoid parity locking by the open ends
    # moderate coupling keeps the insert/delete chain mixing at z = 16
    rows = nematic_scan([7], [(z, 1.0) for z in (1.0, 4.0, 16.0)], ell0=2, sweeps=640_000,
                        thermalization=2000, bin_size=10_000, seed=4)
    devs = [r.deviation for r in rows]
    assert devs[0] > devs[1] > devs[2]
    assert all(r.ratio < 1 for r in rows)
