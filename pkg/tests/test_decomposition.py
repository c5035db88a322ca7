import math

import pytest

from nematic_dimers import gibbs
from nematic_dimers.decomposition import (
    Loop, build_loop_family, contours, core, external_contours, inclusion_parents,
    is_bounding, log_mantle_weight, log_mantle_weight_direct, mantle, mantle_tiling,
    outer_loops, padding, support_of, validate_family, verify_loop_factorization,
)
from nematic_dimers.errors import StructuralError, ValidationError
from nematic_dimers.gibbs import BoundaryCondition
from nematic_dimers.lattice import H, V, Edge, Region, Site, boundary
from nematic_dimers.transfer1d import ModelParams


def he(x, y):
    return Edge.from_site((x, y), H)


def ve(x, y):
    return Edge.from_site((x, y), V)


def domino_loop(x=0, y=0, c=H):
    return Loop(frozenset(Edge.from_site((x, y), c).sites), c)


def test_support_examples():
    assert len(support_of([ve(0, 0), ve(2, 0)], H)) == 0
    assert support_of([he(3, 1)], H).sites == {Site(3, 1), Site(4, 1)}
    assert len(support_of([ve(0, 0), ve(0, 2)], V)) == 4


def test_outer_loops_examples():
    assert outer_loops(Region(frozenset())) == []
    loops = outer_loops(support_of([he(0, 0)], H))
    assert len(loops) == 1 and len(loops[0].edges) == 6
    far = outer_loops(support_of([he(0, 0), he(5, 5)], H))
    assert [len(l.edges) for l in far] == [6, 6]
    assert all(l.edges == boundary(Region(l.interior)) for l in far)


def test_outer_loops_fill_holes_and_drop_nested():
    ring = Region.rect(5, 5) - Region.rect(3, 3, 1, 1)
    inner = Region(frozenset({Site(2, 2)}))
    loops = outer_loops(ring | inner)
    assert len(loops) == 1
    assert loops[0].interior == Region.rect(5, 5).sites


def test_loop_rejects_holes():
    with pytest.raises(ValidationError):
        Loop((Region.rect(3, 3) - Region(frozenset({Site(1, 1)}))).sites)


def test_core_and_mantle_of_domino():
    loop = domino_loop()
    assert len(core(loop, H)) == 0
    assert mantle(loop, H).sites == loop.interior
    assert is_bounding(loop, H)
    assert not is_bounding(loop, V)
    assert not is_bounding(loop, H, sources=[he(0, 0)])
    p = ModelParams(2.7, 1.9)
    assert math.exp(log_mantle_weight(loop, p)) == pytest.approx(2.7)
    assert log_mantle_weight_direct(loop, p) == pytest.approx(log_mantle_weight(loop, p))


def eighteen_edge_loop():
    sites = [(x, 1) for x in range(6)] + [(2, 0), (3, 0), (2, 2), (3, 2)]
    return Loop(frozenset(Site(*s) for s in sites), H)


def test_smallest_loop_hosting_a_dimer():
    loop = eighteen_edge_loop()
    assert len(loop.edges) == 18
    assert core(loop).sites == {Site(2, 1), Site(3, 1)}
    assert is_bounding(loop)
    p = ModelParams(1.6, 2.2)
    # 8 mantle sites, 8 boundary h-edges: (z e^J)^4 e^{-4J} = z^4
    assert log_mantle_weight(loop, p) == pytest.approx(4 * math.log(1.6))
    assert log_mantle_weight_direct(loop, p) == pytest.approx(4 * math.log(1.6))


def test_line_core():
    loop = Loop(frozenset(Site(x, 0) for x in range(7)), V)
    # along v every site touches the top or bottom edge
    assert len(core(loop)) == 0
    # a line parallel to the orientation keeps the sites two away from both ends
    col = Loop(frozenset(Site(0, y) for y in range(7)), V)
    assert core(col, V).sites == set()  # every site touches a side edge
    wide = Loop(Region.rect(3, 7).sites, V)
    assert core(wide, V).sites == {Site(1, y) for y in range(2, 5)}


def test_mantle_weight_with_source():
    loop = domino_loop(0, 0, H)
    p = ModelParams(2.0, 1.5)
    src = [he(2, 0)]
    assert log_mantle_weight(loop, p, src) == pytest.approx(math.log(2.0) + 1.5)
    assert log_mantle_weight_direct(loop, p, src) == pytest.approx(math.log(2.0) + 1.5)


def test_family_examples():
    assert build_loop_family([ve(0, 0), ve(1, 0)], V).loops == ()
    fam = build_loop_family([ve(0, 0), he(2, 2), ve(5, 5)], V)
    assert len(fam.loops) == 1 and len(fam.loops[0].edges) == 6
    assert fam.loops[0].index is H


def nested_config():
    """An h-block whose core holds a vertical domino."""
    hs = [he(x, y) for y in (0, 3) for x in (0, 2, 4)] + [he(x, y) for y in (1, 2) for x in (0, 4)]
    return hs + [ve(2, 1)]


def test_nested_family_alternates():
    fam = build_loop_family(nested_config(), V)
    assert [l.index for l in fam.loops] == [H, V]
    assert fam.parents == (-1, 0)
    assert fam.is_alternating()
    validate_family(fam)
    pad = padding(fam, 0)
    assert pad.sites == {Site(3, 1), Site(3, 2)}


def test_non_bounding_outer_loop_is_reported():
    # a bump on the top row leaves mantle runs of odd length
    conf = [he(x, y) for y in (0, 1) for x in (0, 2, 4, 6)] + [he(3, 2)]
    loop = outer_loops(support_of(conf, H))[0]
    assert mantle_tiling(loop, H) is None
    with pytest.raises(StructuralError):
        build_loop_family(conf, V)


def two_dominoes():
    region = Region.rect(4, 8)
    conf = [he(1, 1), he(1, 4), ve(0, 0), ve(3, 5)]
    return region, build_loop_family(conf, V)


def test_contours_joined_by_short_segment():
    region, fam = two_dominoes()
    assert len(contours(fam, 4, region)) == 1
    assert len(contours(fam, 2, region)) == 2


def test_single_loop_contour():
    region = Region.rect(8, 8)
    fam = build_loop_family([he(3, 3)], V)
    cs = contours(fam, 3, region)
    assert len(cs) == 1 and cs[0].loops == (0,)
    assert external_contours([], fam) == []


def wide_nested():
    hs = [he(x, y) for y in (0, 5) for x in range(0, 10, 2)]
    hs += [he(x, y) for y in range(1, 5) for x in (0, 8)]
    return hs + [ve(4, 2)]


def test_external_contours_drop_inner():
    region = Region.rect(12, 8).translated(-1, -1)
    fam = build_loop_family(wide_nested(), V)
    assert [l.index for l in fam.loops] == [H, V]
    sep = contours(fam, 2, region)
    assert len(sep) == 2
    ext = external_contours(sep, fam)
    assert len(ext) == 1 and ext[0].loops == (0,)
    joined = contours(fam, 4, region)
    assert len(joined) == 1 and joined[0].loops == (0, 1)
    assert external_contours(joined, fam) == joined


def test_far_contours_both_external():
    region = Region.rect(12, 6)
    fam = build_loop_family([he(1, 2), he(8, 2)], V)
    cs = contours(fam, 3, region)
    assert len(cs) == 2
    assert len(external_contours(cs, fam)) == 2


@pytest.fixture(scope="module")
def all_4x4_families():
    region = Region.rect(4, 4)
    bc = BoundaryCondition(V)
    return [(d, build_loop_family(d, V)) for d, _, _ in gibbs.iter_configurations(region, bc)]


def test_family_invariants_exhaustive(all_4x4_families):
    keys = set()
    for dimers, fam in all_4x4_families:
        validate_family(fam)
        # every opposite dimer sits inside some loop
        for d in dimers:
            if d.orientation is H:
                assert any(d.a in l.interior and d.b in l.interior for l in fam.loops)
        # every mantle is packed by dimers of the configuration
        for l in fam.loops:
            assert mantle_tiling(l) <= dimers
        assert list(fam.parents) == inclusion_parents(list(fam.loops))
        keys.add(fam.key())
    assert len(keys) > 100


def test_family_is_a_function():
    conf = nested_config()
    assert build_loop_family(conf, V).key() == build_loop_family(list(reversed(conf)), V).key()


def test_empty_family_group_is_oriented_Z():
    region = Region.rect(4, 4)
    p = ModelParams(2.0, 1.0)
    bc = BoundaryCondition(V, ell0=1)
    report = verify_loop_factorization(region, p, bc)
    empty = [lhs for fam, lhs, rhs in report.per_family if not fam.loops]
    assert empty[0] == pytest.approx(gibbs.oriented_log_Z(region, p, bc), rel=1e-12)


def test_single_domino_family():
    region = Region.rect(4, 4)
    p = ModelParams(2.0, 1.0)
    bc = BoundaryCondition(V, ell0=1)
    report = verify_loop_factorization(region, p, bc)
    singles = [(f, lhs) for f, lhs, _ in report.per_family
               if len(f.loops) == 1 and len(f.loops[0].interior) == 2]
    assert len(singles) == 2
    for fam, lhs in singles:
        loop = fam.loops[0]
        rest = Region(region.sites - loop.interior)
        expect = math.log(2.0) + gibbs.oriented_log_Z(rest, p, bc)
        assert lhs == pytest.approx(expect, rel=1e-12)


@pytest.mark.parametrize("ell0", [0, 1, 2])
@pytest.mark.parametrize("z,J", [(1.0, 1.0), (2.0, 3.0)])
def test_loop_factorization_4x4(ell0, z, J):
    report = verify_loop_factorization(Region.rect(4, 4), ModelParams(z, J), BoundaryCondition(V, ell0=ell0))
    assert report.passed(1e-9), report.max_rel_discrepancy


def test_loop_factorization_with_magnetized_boundary():
    region = Region.rect(4, 4)
    mag = frozenset(e for e in boundary(region) if e.orientation is V)
    report = verify_loop_factorization(region, ModelParams(1.5, 2.0), BoundaryCondition(V, mag, 1))
    assert report.passed(1e-9)
