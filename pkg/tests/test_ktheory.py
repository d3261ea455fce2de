import math
from fractions import Fraction

import numpy as np
import pytest

from oracles import pair_lipschitz

from fillrad_lab.errors import DomainMismatch, IncompleteBoundary
from fillrad_lab.ktheory import (
    PAULI,
    LipschitzProjection,
    LipschitzUnitary,
    MatrixField,
    audit_field,
    boundary_field,
    bott_projection,
    lm_budget,
    polar_ball,
    projection_path,
    radial_extend,
    read_field_file,
    scale_lipschitz,
    write_field_file,
)
from fillrad_lab.metric import ModelSpaceSpec, sample_model_space, validate_metric


def circle_boundary(n):
    a = 2 * math.pi * np.arange(n) / n
    return np.stack([np.cos(a), np.sin(a)], axis=1), a


def test_pauli_relations():
    for s in PAULI:
        assert np.allclose(s @ s, np.eye(2))
    assert np.allclose(PAULI[0] @ PAULI[1], 1j * PAULI[2])


def test_audit_constant_projection():
    sp = validate_metric([[0, 1], [1, 0]])
    p = np.diag([1.0, 0.0])
    a = audit_field(MatrixField(sp, np.stack([p, p])))
    assert a.is_projection and a.lip == 0
    assert not a.is_unitary


def test_audit_exact_lipschitz_against_oracle():
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(12, 2))
    d = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    sp = validate_metric(d)
    vals = rng.normal(size=(12, 3, 3)) + 1j * rng.normal(size=(12, 3, 3))
    assert MatrixField(sp, vals).lipschitz() == pytest.approx(pair_lipschitz(vals, d), rel=1e-10)


def test_projection_rejects_non_projection():
    sp = validate_metric([[0, 1], [1, 0]])
    with pytest.raises(ValueError):
        LipschitzProjection(MatrixField(sp, np.ones((2, 2, 2))), 1)


def test_unitary_field():
    _, a = circle_boundary(16)
    f = boundary_field(circle_boundary(16)[0], np.exp(1j * a)[:, None, None])
    u = LipschitzUnitary(f)
    # chordal distance equals |e^{ia} - e^{ib}|
    assert u.lip == pytest.approx(1.0)


def test_radial_extension_polar_grid():
    pts, a = circle_boundary(64)
    f = boundary_field(pts, np.exp(1j * a)[:, None, None])
    ball = polar_ball(pts, np.linspace(0, 1, 16))
    ext, bound = radial_extend(f, ball)
    assert bound == pytest.approx(4.0)
    assert ext.lipschitz() <= 4.0
    inner = np.linalg.norm(ball, axis=1) <= 0.5
    assert not ext.values[inner].any()
    outer = np.isclose(np.linalg.norm(ball, axis=1), 1)
    assert np.allclose(ext.values[outer], f.values)


def test_radial_extension_missing_direction():
    pts, a = circle_boundary(8)
    f = boundary_field(pts, np.exp(1j * a)[:, None, None])
    with pytest.raises(IncompleteBoundary):
        radial_extend(f, np.array([[0.9 * math.cos(0.1), 0.9 * math.sin(0.1)]]))


def test_bott_projection_sphere():
    sp, _ = sample_model_space(ModelSpaceSpec("sphere2", 400, seed=0))
    p = bott_projection(sp)
    assert p.rank_at_infinity == 1
    assert np.allclose(np.trace(p.field.values, axis1=1, axis2=2), 1)
    assert 0.45 <= p.lip <= 0.65


def test_bott_needs_sphere():
    sp, _ = sample_model_space(ModelSpaceSpec("circle", 8))
    with pytest.raises(DomainMismatch):
        bott_projection(sp)


def test_scale_lipschitz_index_pullback():
    sp, _ = sample_model_space(ModelSpaceSpec("sphere2", 120, seed=2))
    p = bott_projection(sp)
    # scaling the sphere by 2 gives a 1/2-Lipschitz map back to the unit sphere
    big = validate_metric(2 * np.asarray(sp.dist))
    res = scale_lipschitz(p, big, np.arange(120), 0.5)
    assert res.slack == 0
    assert res.audited_lip <= res.bound + 1e-12
    assert res.audited_lip == pytest.approx(p.lip / 2)


def test_scale_lipschitz_snap_rejected():
    sp, _ = sample_model_space(ModelSpaceSpec("sphere2", 50, seed=2))
    p = bott_projection(sp)
    far = np.tile([[0.0, 0.0, 1.0]], (50, 1)) + 0.3
    with pytest.raises(DomainMismatch):
        scale_lipschitz(p, sp, far, 1.0, metric="euclidean")


def test_lm_budget_recursion():
    b = lm_budget(3, 2, 3)
    assert [b.L(j) for j in (1, 2, 3)] == [3, 9, 21]
    assert b.closed_form == 21 and b.consistent


def test_lm_budget_a1_one():
    b = lm_budget(5, 1, Fraction(1, 3), L0=2)
    assert b.Lm == 2 + Fraction(5, 3)


def test_lm_budget_envelope_violation():
    b = lm_budget(12, 10**30, 1)
    assert not b.consistent
    assert b.envelope_margin < 0


def test_lm_budget_rejects_bad_input():
    with pytest.raises(ValueError):
        lm_budget(3, Fraction(1, 2), 1)


def test_projection_path_endpoints():
    sp, _ = sample_model_space(ModelSpaceSpec("sphere2", 40, seed=5))
    p = bott_projection(sp)
    rot = np.asarray(sp.coords["ambient"]) @ np.array(
        [[math.cos(0.3), -math.sin(0.3), 0], [math.sin(0.3), math.cos(0.3), 0], [0, 0, 1]]
    )
    q_vals = 0.5 * (np.eye(2) + np.einsum("ni,ijk->njk", rot, PAULI))
    q = LipschitzProjection(MatrixField(sp, q_vals), 1)
    path = projection_path(p, q, steps=6)
    assert np.allclose(path[0].values, p.field.values)
    assert np.allclose(path[-1].values, q.field.values)
    for f in path:
        assert audit_field(f).is_projection


def test_projection_path_too_far():
    sp, _ = sample_model_space(ModelSpaceSpec("sphere2", 20, seed=5))
    p = bott_projection(sp)
    q = LipschitzProjection(MatrixField(sp, np.eye(2) - p.field.values), 1)
    with pytest.raises(ValueError):
        projection_path(p, q)


def test_field_file_roundtrip(tmp_path):
    sp, _ = sample_model_space(ModelSpaceSpec("sphere2", 10, seed=5))
    f = bott_projection(sp).field
    write_field_file(f, tmp_path / "f.txt")
    back = read_field_file(sp, tmp_path / "f.txt")
    assert np.allclose(back.values, f.values)
