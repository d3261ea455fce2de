import math

import numpy as np
import pytest

from fillrad_lab.errors import (
    MetricAsymmetric,
    NegativeDistance,
    NotNonexpansive,
    TriangleViolation,
    UnsupportedModel,
)
from fillrad_lab.metric import (
    FundamentalCycle,
    ModelSpaceSpec,
    kuratowski_embed,
    mcshane_extend,
    McShaneExtension,
    read_distance_file,
    sample_model_space,
    validate_metric,
    write_distance_file,
)


def test_two_point_space():
    sp = validate_metric([[0, 1], [1, 0]])
    assert sp.n == 2
    assert sp.diameter == 1


def test_asymmetric_rejected():
    with pytest.raises(MetricAsymmetric):
        validate_metric([[0, 1], [2, 0]])


def test_triangle_violation():
    with pytest.raises(TriangleViolation):
        validate_metric([[0, 1, 3], [1, 0, 1], [3, 1, 0]])


def test_negative_rejected():
    with pytest.raises(NegativeDistance):
        validate_metric([[0, -1], [-1, 0]])


def test_dist_is_read_only():
    sp = validate_metric([[0, 1], [1, 0]])
    with pytest.raises(ValueError):
        sp.dist[0, 1] = 5


def test_circle_four_points():
    sp, cycle = sample_model_space(ModelSpaceSpec("circle", 4, R=1.0))
    vals = set(np.round(sp.dist[np.triu_indices(4, 1)], 12))
    assert vals == {round(math.pi / 2, 12), round(math.pi, 12)}
    assert cycle.dim == 1


@pytest.mark.parametrize("n", [5, 16, 33])
def test_circle_diameter(n):
    sp, _ = sample_model_space(ModelSpaceSpec("circle", n))
    assert math.pi - math.pi / n <= sp.diameter <= math.pi + 1e-12


def test_sphere_diameter_seed7():
    # oracle: max over sampled pairs of arccos<u, v>
    sp, _ = sample_model_space(ModelSpaceSpec("sphere2", 200, seed=7))
    u = np.asarray(sp.coords["ambient"])
    oracle = np.arccos(np.clip(u @ u.T, -1, 1)).max()
    assert sp.diameter == pytest.approx(oracle, abs=1e-12)
    assert math.pi - 0.2 <= sp.diameter <= math.pi


def test_unknown_kind():
    with pytest.raises(UnsupportedModel):
        ModelSpaceSpec.from_dict({"kind": "klein-bottle", "n": 10})


def test_sampler_deterministic():
    spec = ModelSpaceSpec("sphere2", 80, seed=3)
    a, _ = sample_model_space(spec)
    b, _ = sample_model_space(spec)
    assert a.dist.tobytes() == b.dist.tobytes()


def test_sphere_cycle_closed():
    _, cycle = sample_model_space(ModelSpaceSpec("sphere2", 60, seed=1))
    assert cycle.dim == 2
    assert cycle.boundary() == {}


def test_torus_cycle_closed():
    _, cycle = sample_model_space(ModelSpaceSpec("flat-torus", 36))
    assert cycle.boundary() == {}


def test_product_cycle_relative():
    base = ModelSpaceSpec("circle", 8)
    sp, cycle = sample_model_space(ModelSpaceSpec("product-with-interval", 8, base=base, T=2.0))
    assert cycle.relative_to
    ends = set(cycle.relative_to)
    for s in cycle.boundary():
        assert set(s) <= ends


def test_distance_file_roundtrip(tmp_path):
    sp, _ = sample_model_space(ModelSpaceSpec("circle", 7))
    path = tmp_path / "d.txt"
    write_distance_file(sp, path)
    back = read_distance_file(path)
    assert np.allclose(back.dist, sp.dist, atol=1e-12)
    assert back.provenance["kind"] == "file"


def test_kuratowski_two_point():
    sp = validate_metric([[0, 1], [1, 0]])
    img = kuratowski_embed(sp, 0)
    assert np.array_equal(img.coords, [[0, 0], [1, -1]])
    assert img.isometry_defect() == 0


def test_kuratowski_circle8_exhaustive():
    sp, _ = sample_model_space(ModelSpaceSpec("circle", 8))
    img = kuratowski_embed(sp, 3)
    for i in range(8):
        for j in range(i + 1, 8):
            assert abs(np.abs(img.coords[i] - img.coords[j]).max() - sp.dist[i, j]) <= 1e-12
    assert img.distance_to_image(img.coords[3]) == 0


def test_kuratowski_bad_basepoint():
    sp = validate_metric([[0, 1], [1, 0]])
    with pytest.raises(IndexError):
        kuratowski_embed(sp, 2)


def test_mcshane_fixes_embedded_points():
    sp, _ = sample_model_space(ModelSpaceSpec("circle", 10))
    img = kuratowski_embed(sp)
    h = np.asarray(img.coords)
    ext = McShaneExtension(img, h)
    for i in range(10):
        assert np.allclose(ext(img.coords[i]), h[i], atol=1e-12)


def test_mcshane_identity_two_point():
    sp = validate_metric([[0, 1], [1, 0]])
    img = kuratowski_embed(sp)
    q = img.coords[0] + np.array([0.3, -0.1])
    out = mcshane_extend(img.coords, img, q)
    assert np.abs(out - img.coords[0]).max() <= 0.3 + 1e-12


def test_mcshane_random_nonexpansive():
    rng = np.random.default_rng(5)
    pts = rng.normal(size=(20, 2))
    d = np.abs(pts[:, None] - pts[None]).max(axis=2)
    sp = validate_metric(d)
    img = kuratowski_embed(sp)
    # h: a 1-Lipschitz map into sup-norm vectors over a second copy
    h = np.asarray(img.coords) * 0.7
    ext = McShaneExtension(img, h)
    for _ in range(50):
        a = rng.normal(size=20)
        b = rng.normal(size=20)
        # oracle: direct inf evaluation
        ha = np.min(h + np.abs(a - img.coords).max(axis=1)[:, None], axis=0)
        assert np.allclose(ext(a), ha)
        assert np.abs(ext(a) - ext(b)).max() <= np.abs(a - b).max() + 1e-12


def test_mcshane_rejects_expanding():
    sp = validate_metric([[0, 1], [1, 0]])
    img = kuratowski_embed(sp)
    with pytest.raises(NotNonexpansive):
        McShaneExtension(img, 2 * np.asarray(img.coords))


def test_oriented_cycle_signs():
    c = FundamentalCycle.from_oriented(1, [(1, 0), (0, 2), (2, 1)])
    assert c.coeffs[(0, 1)] == -1
    assert c.boundary() == {}
