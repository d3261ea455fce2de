"""Finite metric spaces, model-manifold samplers and the Kuratowski embedding.

Every object in the laboratory lives on a :class:`FiniteMetricSpace`, a
validated symmetric distance matrix plus optional coordinates describing
where the points came from.  The samplers produce the model manifolds used
throughout (round circles and spheres, flat tori, segments and products
with an interval) together with a triangulation whose top-dimensional cycle
represents the fundamental class.

The sup-norm space of bounded functions on a space is replaced by ``R^n``
with the max norm, indexed by the sample itself, so the Kuratowski map
``x -> d(x, .) - d(x0, .)`` is an exact isometry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.spatial import ConvexHull
from scipy.spatial.transform import Rotation

from .errors import (
    MetricAsymmetric,
    NegativeDistance,
    NotNonexpansive,
    TriangleViolation,
    UnsupportedModel,
)

METRIC_TOL = 1e-9
ISOMETRY_TOL = 1e-12

__all__ = [
    "FiniteMetricSpace",
    "FundamentalCycle",
    "KuratowskiImage",
    "ModelSpaceSpec",
    "McShaneExtension",
    "validate_metric",
    "sample_model_space",
    "kuratowski_embed",
    "mcshane_extend",
    "read_distance_file",
    "write_distance_file",
    "oriented_key",
]


@dataclass(frozen=True, eq=False)
class FiniteMetricSpace:
    """A finite metric space given by its distance matrix.

    Parameters
    ----------
    dist : ndarray of shape (n, n)
        Symmetric matrix of nonnegative distances with zero diagonal.
    labels : sequence of str, optional
        Point identifiers.
    provenance : dict
        Sampler descriptor (``{"kind": ...}``) or ``{"kind": "file"}``.
    coords : dict of str to ndarray
        Named per-point coordinates supplied by samplers, e.g. ``"ambient"``
        (unit vectors for round spheres), ``"interval"`` (the interval
        coordinate of products and segments) or ``"angle"``.
    """

    dist: np.ndarray
    labels: tuple[str, ...] | None = None
    provenance: Mapping[str, Any] = field(default_factory=dict)
    coords: Mapping[str, np.ndarray] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return int(self.dist.shape[0])

    @property
    def diameter(self) -> float:
        return float(self.dist.max()) if self.n else 0.0

    def subspace(self, idx: Sequence[int]) -> "FiniteMetricSpace":
        """Restrict to the points ``idx`` (order preserved)."""
        idx = np.asarray(idx, dtype=int)
        labels = None if self.labels is None else tuple(self.labels[i] for i in idx)
        coords = {k: np.asarray(v)[idx] for k, v in self.coords.items()}
        return FiniteMetricSpace(
            _readonly(self.dist[np.ix_(idx, idx)]),
            labels,
            dict(self.provenance, subspace=True),
            coords,
        )


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def validate_metric(
    dist: Any,
    labels: Sequence[str] | None = None,
    provenance: Mapping[str, Any] | None = None,
    coords: Mapping[str, np.ndarray] | None = None,
    tol: float = METRIC_TOL,
) -> FiniteMetricSpace:
    """Validate a distance matrix and wrap it as a :class:`FiniteMetricSpace`.

    The matrix is never repaired: asymmetry, negative entries and triangle
    violations beyond ``tol`` raise.

    Raises
    ------
    NegativeDistance, MetricAsymmetric, TriangleViolation
        When the corresponding axiom fails.
    ValueError
        If the input is not a square matrix of finite reals.
    """
    d = np.asarray(dist, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError(f"distance matrix must be square, got shape {d.shape}")
    if not np.all(np.isfinite(d)):
        raise ValueError("distance matrix has non-finite entries")
    if (d < 0).any():
        i, j = np.argwhere(d < 0)[0]
        raise NegativeDistance(f"dist[{i},{j}] = {d[i, j]} < 0")
    asym = np.abs(d - d.T)
    if asym.max(initial=0.0) > tol:
        i, j = np.unravel_index(np.argmax(asym), asym.shape)
        raise MetricAsymmetric(f"|dist[{i},{j}] - dist[{j},{i}]| = {asym[i, j]:.3e}")
    if np.abs(np.diag(d)).max(initial=0.0) > tol:
        raise MetricAsymmetric("nonzero diagonal entry")
    n = d.shape[0]
    # triangle inequality, one intermediate point at a time (O(n^3), O(n^2) memory)
    for j in range(n):
        excess = d - (d[:, j][:, None] + d[j, :][None, :])
        k = np.argmax(excess)
        if excess.flat[k] > tol:
            i, l = np.unravel_index(k, excess.shape)
            raise TriangleViolation(
                f"dist[{i},{l}] = {d[i, l]} > dist[{i},{j}] + dist[{j},{l}] = "
                f"{d[i, j] + d[j, l]}"
            )
    if labels is not None and len(labels) != n:
        raise ValueError("labels length does not match matrix size")
    return FiniteMetricSpace(
        _readonly(d),
        None if labels is None else tuple(labels),
        dict(provenance or {"kind": "matrix"}),
        {k: np.asarray(v) for k, v in (coords or {}).items()},
    )


# ---------------------------------------------------------------------------
# Distance-matrix files
# ---------------------------------------------------------------------------


def write_distance_file(space: FiniteMetricSpace, path: str | Path) -> None:
    """Write ``n`` then the lower-triangular rows (diagonal included)."""
    lines = [str(space.n)]
    for i in range(space.n):
        lines.append(" ".join(repr(float(x)) for x in space.dist[i, : i + 1]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_distance_file(path: str | Path) -> FiniteMetricSpace:
    """Read a lower-triangular distance file and validate it.

    Row ``i`` may list either ``i`` entries (strictly lower part) or ``i+1``
    entries (diagonal included).
    """
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    n = int(rows[0][0])
    if len(rows) - 1 != n:
        raise ValueError(f"expected {n} rows after the header, found {len(rows) - 1}")
    d = np.zeros((n, n))
    for i, row in enumerate(rows[1:]):
        vals = [float(x) for x in row]
        if len(vals) == i + 1:
            vals = vals[:i]
        elif len(vals) != i:
            raise ValueError(f"row {i + 1} has {len(vals)} entries")
        d[i, :i] = vals
        d[:i, i] = vals
    return validate_metric(d, provenance={"kind": "file", "path": str(path)})


# ---------------------------------------------------------------------------
# Chains attached to samples
# ---------------------------------------------------------------------------


def oriented_key(simplex: Sequence[int]) -> tuple[tuple[int, ...], int]:
    """Sort a vertex tuple and return it with the permutation sign."""
    s = list(simplex)
    sign = 1
    # insertion sort counting transpositions
    for i in range(1, len(s)):
        j = i
        while j > 0 and s[j - 1] > s[j]:
            s[j - 1], s[j] = s[j], s[j - 1]
            sign = -sign
            j -= 1
    if len(set(s)) != len(s):
        return tuple(s), 0
    return tuple(s), sign


@dataclass(frozen=True)
class FundamentalCycle:
    """Integer chain representing the fundamental class of a sampled manifold.

    Attributes
    ----------
    dim : int
        Dimension of the cycle.
    coeffs : dict
        Sorted vertex tuple to integer coefficient.
    relative_to : tuple of int
        Points of the end region for relative cycles (products with an
        interval); empty for closed manifolds.
    """

    dim: int
    coeffs: Mapping[tuple[int, ...], int]
    relative_to: tuple[int, ...] = ()

    @classmethod
    def from_oriented(
        cls, dim: int, simplices: Sequence[Sequence[int]], relative_to: Sequence[int] = ()
    ) -> "FundamentalCycle":
        coeffs: dict[tuple[int, ...], int] = {}
        for s in simplices:
            key, sign = oriented_key(s)
            if sign:
                coeffs[key] = coeffs.get(key, 0) + sign
        return cls(dim, {k: v for k, v in coeffs.items() if v}, tuple(relative_to))

    def boundary(self) -> dict[tuple[int, ...], int]:
        """Integer boundary of the chain (empty for absolute cycles)."""
        out: dict[tuple[int, ...], int] = {}
        for s, c in self.coeffs.items():
            for i in range(len(s)):
                face = s[:i] + s[i + 1 :]
                out[face] = out.get(face, 0) + (-1) ** i * c
        return {k: v for k, v in out.items() if v}


# ---------------------------------------------------------------------------
# Model spaces
# ---------------------------------------------------------------------------

_KINDS = ("circle", "sphere2", "flat-torus", "product-with-interval", "line-segment")


@dataclass(frozen=True)
class ModelSpaceSpec:
    """Description of a sampled model manifold.

    Parameters
    ----------
    kind : str
        One of ``circle``, ``sphere2``, ``flat-torus``,
        ``product-with-interval`` or ``line-segment``.
    n : int
        Sample count.  For ``flat-torus`` this is the total grid size unless
        ``shape`` is given; for ``product-with-interval`` it is the base
        sample count and ``layers`` controls the interval factor.
    seed : int
        Seed for the random rotation applied to sphere samples.
    R, L1, L2, T, L : float
        Scale parameters of the respective kinds.
    base : ModelSpaceSpec, optional
        Base manifold of a product.
    layers : int, optional
        Number of interval layers of a product (default: unit spacing).
    shape : (int, int), optional
        Grid shape of a flat torus.
    """

    kind: str
    n: int
    seed: int = 0
    R: float = 1.0
    L1: float = 2 * math.pi
    L2: float = 2 * math.pi
    T: float = 8.0
    L: float = 10.0
    base: "ModelSpaceSpec | None" = None
    layers: int | None = None
    shape: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise UnsupportedModel(f"unknown model kind {self.kind!r}; expected one of {_KINDS}")
        if self.kind == "product-with-interval":
            if self.base is None:
                raise ValueError("product-with-interval needs a base spec")
            if self.T < 0:
                raise ValueError("T must be nonnegative")
        elif self.n < 4:
            raise ValueError("sample count must be at least 4")
        for name in ("R", "L1", "L2", "L"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ModelSpaceSpec":
        d = dict(d)
        if "base" in d and d["base"] is not None:
            d["base"] = cls.from_dict(d["base"])
        if d.get("shape") is not None:
            d["shape"] = tuple(d["shape"])
        if d.get("kind") not in _KINDS:
            raise UnsupportedModel(f"unknown model kind {d.get('kind')!r}")
        return cls(**d)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind, "n": self.n, "seed": self.seed}
        for name in ("R", "L1", "L2", "T", "L", "layers", "shape"):
            out[name] = getattr(self, name)
        out["base"] = None if self.base is None else self.base.to_dict()
        return out

    @property
    def manifold_dim(self) -> int:
        if self.kind in ("circle", "line-segment"):
            return 1
        if self.kind in ("sphere2", "flat-torus"):
            return 2
        return self.base.manifold_dim + 1  # type: ignore[union-attr]


def _fibonacci_sphere(n: int, seed: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    polar = np.arccos(1.0 - 2.0 * i / n)
    azim = math.pi * (1.0 + math.sqrt(5.0)) * i
    pts = np.stack(
        [np.cos(azim) * np.sin(polar), np.sin(azim) * np.sin(polar), np.cos(polar)], axis=1
    )
    rot = Rotation.random(random_state=seed).as_matrix()
    pts = pts @ rot.T
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def _sym(d: np.ndarray) -> np.ndarray:
    d = np.triu(d, 1)
    return d + d.T


def _hull_cycle(pts: np.ndarray, ids: Sequence[int] | None = None) -> list[tuple[int, int, int]]:
    """Outward-oriented boundary triangles of the convex hull of ``pts``."""
    ids = np.arange(len(pts)) if ids is None else np.asarray(ids)
    hull = ConvexHull(pts[ids])
    tris = []
    for f in hull.simplices:
        a, b, c = (int(ids[k]) for k in f)
        if np.linalg.det(pts[[a, b, c]]) < 0:
            b, c = c, b
        tris.append((a, b, c))
    return tris


def _prism_simplices(simplex: Sequence[int], lo: Sequence[int], hi: Sequence[int]):
    """Oriented staircase triangulation of ``simplex x [0,1]``.

    ``lo[v]`` and ``hi[v]`` are the point indices of base vertex ``v`` on the
    two layers.  The boundary of the returned chain equals
    ``hi(simplex) - lo(simplex) - prism(boundary simplex)``.
    """
    k = len(simplex)
    out = []
    for i in range(k):
        verts = [lo[simplex[j]] for j in range(i + 1)] + [hi[simplex[j]] for j in range(i, k)]
        out.append(((-1) ** i, verts))
    return out


def sample_model_space(spec: ModelSpaceSpec) -> tuple[FiniteMetricSpace, FundamentalCycle | None]:
    """Sample a model manifold with exact geodesic distances.

    Returns
    -------
    space : FiniteMetricSpace
        The sample.  Round spheres carry ``coords["ambient"]`` (unit
        vectors); segments and products carry ``coords["interval"]``.
    cycle : FundamentalCycle or None
        Triangulation of the sample whose top cycle represents the
        fundamental class (relative to the end layers for products).  Segments
        return ``None``.

    Raises
    ------
    UnsupportedModel
        For unknown kinds.
    """
    kind = spec.kind
    if kind == "circle":
        n, R = spec.n, spec.R
        steps = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :])
        steps = np.minimum(steps, n - steps)
        d = R * (2 * math.pi / n) * steps
        ang = 2 * math.pi * np.arange(n) / n
        amb = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        cyc = FundamentalCycle.from_oriented(1, [(i, (i + 1) % n) for i in range(n)])
        space = FiniteMetricSpace(
            _readonly(d), None, {"kind": "circle", "R": R, "dim": 1},
            {"ambient": amb, "angle": ang},
        )
        return space, cyc
    if kind == "sphere2":
        pts = _fibonacci_sphere(spec.n, spec.seed)
        d = spec.R * np.arccos(np.clip(pts @ pts.T, -1.0, 1.0))
        np.fill_diagonal(d, 0.0)
        d = _sym(d)
        cyc = FundamentalCycle.from_oriented(2, _hull_cycle(pts))
        space = FiniteMetricSpace(
            _readonly(d), None, {"kind": "sphere2", "R": spec.R, "dim": 2, "seed": spec.seed},
            {"ambient": pts},
        )
        return space, cyc
    if kind == "flat-torus":
        if spec.shape is not None:
            n1, n2 = spec.shape
        else:
            n1 = n2 = int(round(math.sqrt(spec.n)))
            if n1 * n2 != spec.n:
                raise ValueError("flat-torus sample count must be a square unless shape is given")
        i, j = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
        i, j = i.ravel(), j.ravel()
        si = np.abs(i[:, None] - i[None, :])
        si = np.minimum(si, n1 - si)
        sj = np.abs(j[:, None] - j[None, :])
        sj = np.minimum(sj, n2 - sj)
        d = np.hypot(si * (spec.L1 / n1), sj * (spec.L2 / n2))
        idx = lambda a, b: (a % n1) * n2 + (b % n2)  # noqa: E731
        tris = []
        for a in range(n1):
            for b in range(n2):
                p, q, r, s = idx(a, b), idx(a + 1, b), idx(a, b + 1), idx(a + 1, b + 1)
                tris += [(p, q, s), (p, s, r)]
        cyc = FundamentalCycle.from_oriented(2, tris)
        coords = {"torus": np.stack([i * spec.L1 / n1, j * spec.L2 / n2], axis=1)}
        space = FiniteMetricSpace(
            _readonly(d), None,
            {"kind": "flat-torus", "L1": spec.L1, "L2": spec.L2, "dim": 2, "shape": (n1, n2)},
            coords,
        )
        return space, cyc
    if kind == "line-segment":
        x = np.linspace(0.0, spec.L, spec.n)
        d = np.abs(x[:, None] - x[None, :])
        space = FiniteMetricSpace(
            _readonly(d), None, {"kind": "line-segment", "L": spec.L, "dim": 1},
            {"interval": x},
        )
        return space, None
    if kind == "product-with-interval":
        base_space, base_cycle = sample_model_space(spec.base)  # type: ignore[arg-type]
        layers = spec.layers if spec.layers is not None else int(round(2 * spec.T)) + 1
        if spec.T == 0:
            layers = 1
        ts = np.linspace(-spec.T, spec.T, layers) if layers > 1 else np.zeros(1)
        nb = base_space.n
        db = np.asarray(base_space.dist)
        tt = np.repeat(ts, nb)
        d = np.sqrt(np.tile(db, (layers, layers)) ** 2 + (tt[:, None] - tt[None, :]) ** 2)
        coords = {"interval": tt}
        for k, v in base_space.coords.items():
            coords[f"base_{k}"] = np.tile(np.asarray(v), (layers,) + (1,) * (np.ndim(v) - 1))
        prov = {
            "kind": "product-with-interval", "T": spec.T, "layers": layers,
            "base": dict(base_space.provenance), "dim": spec.manifold_dim, "base_n": nb,
        }
        space = FiniteMetricSpace(_readonly(d), None, prov, coords)
        cycle = None
        if base_cycle is not None:
            if layers == 1:
                cycle = base_cycle
            else:
                simplices = []
                for j in range(layers - 1):
                    lo = [j * nb + v for v in range(nb)]
                    hi = [(j + 1) * nb + v for v in range(nb)]
                    for s, c in base_cycle.coeffs.items():
                        for sign, verts in _prism_simplices(s, lo, hi):
                            simplices.append((sign * c, verts))
                coeffs: dict[tuple[int, ...], int] = {}
                for c, verts in simplices:
                    key, sg = oriented_key(verts)
                    coeffs[key] = coeffs.get(key, 0) + c * sg
                ends = tuple(range(nb)) + tuple(range((layers - 1) * nb, layers * nb))
                cycle = FundamentalCycle(
                    base_cycle.dim + 1, {k: v for k, v in coeffs.items() if v}, ends
                )
        return space, cycle
    raise UnsupportedModel(kind)  # pragma: no cover - guarded by ModelSpaceSpec


# ---------------------------------------------------------------------------
# Kuratowski embedding and McShane extension
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KuratowskiImage:
    """Image of a finite space under ``x -> d(x, .) - d(x0, .)``.

    Attributes
    ----------
    base : FiniteMetricSpace
    basepoint : int
    coords : ndarray of shape (n, n)
        Row ``x`` is the sup-norm vector of point ``x``.
    """

    base: FiniteMetricSpace
    basepoint: int
    coords: np.ndarray

    def isometry_defect(self) -> float:
        """Largest discrepancy between sup-norm and original distances."""
        c = self.coords
        sup = np.abs(c[:, None, :] - c[None, :, :]).max(axis=2)
        return float(np.abs(sup - self.base.dist).max())

    def distance_to_image(self, phi: np.ndarray) -> float:
        """Sup-norm distance from ``phi`` to the nearest embedded point."""
        return float(np.abs(self.coords - np.asarray(phi)[None, :]).max(axis=1).min())


def kuratowski_embed(space: FiniteMetricSpace, basepoint: int = 0) -> KuratowskiImage:
    """Embed ``space`` isometrically into ``(R^n, sup)``.

    Raises
    ------
    IndexError
        If ``basepoint`` is out of range.
    """
    if not 0 <= basepoint < space.n:
        raise IndexError(f"basepoint {basepoint} outside 0..{space.n - 1}")
    d = np.asarray(space.dist)
    coords = d - d[basepoint][None, :]
    coords.setflags(write=False)
    return KuratowskiImage(space, basepoint, coords)


class McShaneExtension:
    """Nonexpansive extension of a map defined on embedded points.

    Given ``h(m1)`` for every point ``m1`` of the first space (sup-norm
    vectors over the second space), the extension to an arbitrary query
    ``phi`` is ``H(phi)(m2) = min_m1 h(m1)(m2) + |phi - Psi1(m1)|_sup``.

    Parameters
    ----------
    image1 : KuratowskiImage
        Embedding of the source space.
    h_values : ndarray of shape (n1, n2)
        Values of ``h`` on the embedded points.
    tol : float
        Slack allowed in the nonexpansiveness audit.

    Raises
    ------
    NotNonexpansive
        If ``h`` expands some pair beyond ``tol``.
    """

    def __init__(self, image1: KuratowskiImage, h_values: np.ndarray, tol: float = 1e-12):
        h = np.asarray(h_values, dtype=float)
        if h.shape[0] != image1.base.n:
            raise ValueError("h must have one row per point of the source space")
        out = np.abs(h[:, None, :] - h[None, :, :]).max(axis=2)
        excess = out - np.asarray(image1.base.dist)
        if excess.max() > tol:
            i, j = np.unravel_index(np.argmax(excess), excess.shape)
            raise NotNonexpansive(
                f"|h({i}) - h({j})| = {out[i, j]:.6g} exceeds d = {image1.base.dist[i, j]:.6g}"
            )
        self.image1 = image1
        self.h = h

    def __call__(self, query: np.ndarray) -> np.ndarray:
        q = np.atleast_2d(np.asarray(query, dtype=float))
        gap = np.abs(q[:, None, :] - self.image1.coords[None, :, :]).max(axis=2)  # (nq, n1)
        vals = (self.h[None, :, :] + gap[:, :, None]).min(axis=1)
        return vals[0] if np.ndim(query) == 1 else vals


def mcshane_extend(
    h_values: np.ndarray, image1: KuratowskiImage, query: np.ndarray
) -> np.ndarray:
    """Evaluate the McShane extension of ``h`` at ``query``.

    See :class:`McShaneExtension`; this is the one-shot functional form.
    """
    return McShaneExtension(image1, h_values)(query)
