import math

import numpy as np
import pytest

from oracles import lebesgue_scan, r_multiplicity as brute_mult

from fillrad_lab.covers import (
    Cover,
    NervePoint,
    ball_cover,
    build_cover_strips,
    build_g_r,
    build_nerve,
    lebesgue_number,
    lipschitz_audit,
    nerve_distance,
    project_to_nerve,
    r_multiplicity,
    read_cover_file,
    simplex_vertices,
    thicken_cover,
    write_cover_file,
    write_nerve_file,
)
from fillrad_lab.errors import BadAnchor, CoverageGap, NotAProduct, NotWellDefined
from fillrad_lab.metric import ModelSpaceSpec, kuratowski_embed, sample_model_space, validate_metric


def segment(n, L):
    sp, _ = sample_model_space(ModelSpaceSpec("line-segment", n, L=L))
    return sp, np.asarray(sp.coords["interval"])


def interval_cover(sp, t, starts, width):
    return Cover(sp, tuple(np.flatnonzero((t >= a - 1e-12) & (t <= a + width + 1e-12)) for a in starts))


def test_r_multiplicity_segment_example():
    sp, t = segment(100, 10)
    cov = interval_cover(sp, t, np.arange(0, 10, 1.5), 2.0)
    assert r_multiplicity(cov, 0.1) == 2
    assert brute_mult(sp.dist, [set(m) for m in cov.members], 0.1) == 2


def test_r_multiplicity_single_member():
    sp, _ = segment(20, 3)
    assert r_multiplicity(Cover(sp, (np.arange(20),)), 0.7) == 1


def test_r_multiplicity_large_r():
    sp, t = segment(30, 6)
    cov = interval_cover(sp, t, [0, 2, 4], 2.0)
    assert r_multiplicity(cov, 10.0) == cov.k


def test_r_multiplicity_rejects_nonpositive():
    sp, _ = segment(10, 1)
    with pytest.raises(ValueError):
        r_multiplicity(Cover(sp, (np.arange(10),)), 0)


def test_lebesgue_single_member():
    sp, _ = segment(11, 5)
    assert lebesgue_number(Cover(sp, (np.arange(11),))) >= sp.diameter


def test_lebesgue_two_point():
    # open balls B(p, r) with r <= 1 contain only p
    sp = validate_metric([[0, 1], [1, 0]])
    cov = Cover(sp, (np.array([0]), np.array([1])))
    assert lebesgue_number(cov) == 1.0
    assert lebesgue_scan(sp.dist, [{0}, {1}], np.linspace(0.01, 2, 200)) == 1.0


def test_coverage_gap():
    sp, _ = segment(10, 1)
    with pytest.raises(CoverageGap):
        Cover(sp, (np.arange(5),))


def test_thicken_strip_member():
    sp, t = segment(101, 10)
    cov = interval_cover(sp, t, np.arange(0, 10, 2), 2.0)
    th = thicken_cover(cov, 0.5)
    member = th.members[1]  # from [2, 4]
    expect = np.flatnonzero((t > 1.5) & (t < 4.5))
    assert np.array_equal(member, expect)
    assert lebesgue_number(th) >= 0.5
    assert (th.diameters - cov.diameters).max() <= 1.0 + 1e-12


def test_thicken_tiny_r_unchanged():
    sp, t = segment(11, 10)
    cov = interval_cover(sp, t, [0, 5], 5.0)
    th = thicken_cover(cov, 0.5)
    assert all(np.array_equal(a, b) for a, b in zip(cov.members, th.members))


def test_strips_segment_16():
    sp, t = segment(161, 16)
    cov = build_cover_strips(sp, 2.0, r=0.5)
    assert cov.multiplicity == 2
    assert r_multiplicity(cov, 0.5) <= 2
    assert brute_mult(sp.dist, [set(m) for m in cov.members], 0.5) <= 2


def test_strips_short_segment_single_member():
    sp, _ = segment(20, 3)
    assert build_cover_strips(sp, 2.0).k == 1


def test_strips_product():
    base = ModelSpaceSpec("circle", 12)
    sp, _ = sample_model_space(ModelSpaceSpec("product-with-interval", 12, base=base, T=10.0))
    cov = build_cover_strips(sp, 2.0, r=0.5)
    # the circle factor is covered by one member, so the bound is 2 * 1
    assert r_multiplicity(cov, 0.5) <= 2


def test_strips_need_interval():
    sp, _ = sample_model_space(ModelSpaceSpec("circle", 12))
    with pytest.raises(NotAProduct):
        build_cover_strips(sp, 1.0)


def test_cover_file_roundtrip(tmp_path):
    sp, t = segment(21, 4)
    cov = interval_cover(sp, t, [0, 1.5, 3], 1.5)
    write_cover_file(cov, tmp_path / "c.txt")
    back = read_cover_file(sp, tmp_path / "c.txt")
    assert all(np.array_equal(a, b) for a, b in zip(cov.members, back.members))


def test_nerve_two_members_edge():
    sp, t = segment(11, 10)
    nerve = build_nerve(interval_cover(sp, t, [0, 4], 6.0))
    assert nerve.maximal == ((0, 1),)
    assert len(nerve.skeleton(0)) == 2


def test_nerve_hollow_triangle():
    sp = validate_metric(np.ones((3, 3)) - np.eye(3))
    cov = Cover(sp, (np.array([0, 1]), np.array([1, 2]), np.array([0, 2])))
    nerve = build_nerve(cov)
    assert (0, 1, 2) not in nerve.simplices
    assert set(nerve.skeleton(1)) == {(0, 1), (1, 2), (0, 2)}


def test_nerve_of_strips_is_path():
    sp, t = segment(161, 16)
    cov = thicken_cover(build_cover_strips(sp, 2.0), 0.5)
    nerve = build_nerve(cov)
    # oracle: explicit intersection table
    m = cov.mask
    table = {(i, j) for i in range(cov.k) for j in range(i + 1, cov.k) if (m[i] & m[j]).any()}
    assert set(nerve.skeleton(1)) == table
    assert table == {(i, i + 1) for i in range(cov.k - 1)}
    assert nerve.dimension == 1


def test_simplex_vertices_on_sphere():
    for n in range(1, 6):
        v = simplex_vertices(n)
        assert np.allclose(np.linalg.norm(v, axis=1), 1)
        g = v @ v.T
        off = g[~np.eye(n + 1, dtype=bool)]
        assert np.allclose(off, -1 / n)
    assert np.array_equal(simplex_vertices(1), [[1.0], [-1.0]])


@pytest.mark.parametrize("flavor", ["l1", "spherical"])
def test_nerve_edge_vertex_distance(flavor):
    sp, t = segment(11, 10)
    nerve = build_nerve(interval_cover(sp, t, [0, 4], 6.0), flavor)
    a, b = NervePoint.vertex(0), NervePoint.vertex(1)
    assert nerve_distance(nerve, a, a) == 0
    assert nerve_distance(nerve, a, b) == pytest.approx(2.0)


def test_nerve_distance_disconnected():
    sp = validate_metric(np.array([[0, 5.0], [5.0, 0]]))
    nerve = build_nerve(Cover(sp, (np.array([0]), np.array([1]))))
    assert math.isinf(nerve_distance(nerve, NervePoint.vertex(0), NervePoint.vertex(1)))


def test_nerve_export(tmp_path):
    sp, t = segment(11, 10)
    nerve = build_nerve(interval_cover(sp, t, [0, 4], 6.0))
    write_nerve_file(nerve, tmp_path / "n.txt")
    assert (tmp_path / "n.txt").read_text() == "0 1\n"


def test_f_r_single_member_vertex():
    sp, t = segment(21, 10)
    cov = thicken_cover(interval_cover(sp, t, [0, 5], 5.0), 0.5)
    f = project_to_nerve(sp, cov, build_nerve(cov))
    # t = 0 lies only in the first member
    assert f(0).simplex == (0,)


def test_f_r_midpoint():
    sp, t = segment(21, 10)
    cov = Cover(sp, (np.flatnonzero(t <= 6), np.flatnonzero(t >= 4)))
    f = project_to_nerve(sp, cov, build_nerve(cov))
    mid = int(np.argmin(np.abs(t - 5)))
    assert np.allclose(f.weights[mid], [0.5, 0.5])


def test_f_r_piecewise_affine_on_strips():
    sp, t = segment(321, 16)
    cov = thicken_cover(build_cover_strips(sp, 2.0), 0.5)
    f = project_to_nerve(sp, cov, build_nerve(cov))
    w = cov.distance_to_complements()
    # oracle: direct formula on the grid
    assert np.allclose(f.weights, w / w.sum(axis=1, keepdims=True))
    second = np.abs(np.diff(f.weights, 2, axis=0))
    # affine away from finitely many breakpoints
    assert (second.max(axis=1) < 1e-9).mean() > 0.9


def test_lipschitz_audit_constant_and_identity():
    sp, _ = segment(15, 3)
    assert lipschitz_audit(sp, np.zeros((15, 15))) == 0
    assert lipschitz_audit(sp, np.asarray(sp.dist)) == pytest.approx(1.0)


def test_lipschitz_audit_not_well_defined():
    sp = validate_metric([[0, 0], [0, 0]])
    with pytest.raises(NotWellDefined):
        lipschitz_audit(sp, np.array([[0, 1.0], [1.0, 0]]))


def test_lipschitz_strip_bound():
    sp, _ = segment(161, 16)
    cov = thicken_cover(build_cover_strips(sp, 2.0), 0.5)
    f = project_to_nerve(sp, cov, build_nerve(cov, "l1"))
    lip = lipschitz_audit(sp, f)
    assert lip <= (1 + 1) ** 2 / 0.5
    assert f.lipschitz_bound == 8.0


def test_g_r_vertex_and_round_trip():
    sp, _ = segment(161, 16)
    cov = thicken_cover(build_cover_strips(sp, 2.0), 0.5)
    nerve = build_nerve(cov)
    img = kuratowski_embed(sp)
    g = build_g_r(nerve, img)
    assert np.array_equal(g(NervePoint.vertex(1)), img.coords[nerve.anchors[1]])
    f = project_to_nerve(sp, cov, nerve)
    disp = g.round_trip(f)
    assert disp.max() <= g.D + 1e-12
    # points in exactly one member move at most that member's diameter
    single = cov.mask.sum(axis=0) == 1
    owner = cov.mask.argmax(axis=0)
    assert (disp[single] <= cov.diameters[owner[single]] + 1e-12).all()


def test_bad_anchor():
    sp, t = segment(11, 10)
    cov = interval_cover(sp, t, [0, 4], 6.0)
    with pytest.raises(BadAnchor):
        build_nerve(cov, anchors=[10, 0])


def test_ball_cover_sphere():
    sp, _ = sample_model_space(ModelSpaceSpec("sphere2", 150, seed=2))
    cov = thicken_cover(ball_cover(sp, 0.8, seed=1), 0.2)
    for flavor, power in (("l1", 2), ("spherical", 3)):
        f = project_to_nerve(sp, cov, build_nerve(cov, flavor))
        assert lipschitz_audit(sp, f) <= cov.multiplicity**power / 0.2
