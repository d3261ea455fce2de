"""Uryson-width upper bounds and the chain of metric invariants.

For a closed ``n``-manifold the invariants satisfy

    inj / (n + 2)  <=  fillrad  <=  width_k  <=  diam,
    radsphere  <=  (4 / pi) fillrad.

This module produces certified upper bounds for ``width_k`` from audited
covers, lower bounds for ``radsphere`` from explicit maps onto round
spheres, and a report evaluating every inequality with its margin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .covers import Cover, r_multiplicity
from .errors import IncompleteReport, MultiplicityTooHigh
from .metric import FiniteMetricSpace

__all__ = [
    "WidthBound",
    "RadsphereCertificate",
    "InvariantReport",
    "sample_mesh",
    "uryson_width_upper",
    "band_cover",
    "model_width_cover",
    "analytic_inj",
    "radsphere_certificate",
    "invariant_report",
]

CSV_COLUMNS = ("space", "invariant", "value", "bound", "margin", "pass")


def sample_mesh(space: FiniteMetricSpace) -> float:
    """Largest nearest-neighbour distance in the sample."""
    d = np.array(space.dist, dtype=float)
    np.fill_diagonal(d, np.inf)
    return float(d.min(axis=1).max())


@dataclass(frozen=True)
class WidthBound:
    """Certified upper bound ``width_k <= value`` from an audited cover."""

    k: int
    value: float
    multiplicity: int
    audit_radius: float


def uryson_width_upper(cover: Cover, k: int, audit_radius: float | None = None) -> WidthBound:
    """Upper bound on ``width_k`` from a cover of multiplicity at most ``k+1``.

    Point subsets stand in for open sets, so the multiplicity is audited as
    the ``r``-multiplicity at the sample mesh (every ball reaching the
    nearest neighbour counts every member it meets).  A cover passing the
    audit yields ``width_k <= diam(cover)``.

    Raises
    ------
    MultiplicityTooHigh
        If the audited multiplicity exceeds ``k+1``.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    r = sample_mesh(cover.base) if audit_radius is None else float(audit_radius)
    mult = r_multiplicity(cover, r * (1 + 1e-9)) if r > 0 else cover.multiplicity
    if mult > k + 1:
        raise MultiplicityTooHigh(f"audited multiplicity {mult} exceeds k+1 = {k + 1}")
    return WidthBound(k, cover.diameter, mult, r)


def band_cover(
    space: FiniteMetricSpace,
    values: np.ndarray,
    n_bands: int,
    lo: float,
    hi: float,
    periodic: bool = False,
) -> Cover:
    """Partition the sample into ``n_bands`` equal bands of a coordinate.

    Points with value in ``[lo + j w, lo + (j+1) w)`` form member ``j``,
    where ``w = (hi - lo) / n_bands``; ``periodic`` wraps values modulo the
    period ``hi - lo``.  Empty bands are dropped.
    """
    v = np.asarray(values, dtype=float)
    if periodic:
        v = lo + np.mod(v - lo, hi - lo)
    w = (hi - lo) / n_bands
    j = np.clip(np.floor((v - lo) / w).astype(int), 0, n_bands - 1)
    members = tuple(np.flatnonzero(j == b) for b in range(n_bands) if (j == b).any())
    return Cover(space, members)


def model_width_cover(space: FiniteMetricSpace) -> tuple[Cover, int]:
    """Cover used to bound ``width_{n-1}`` of a sampled model manifold.

    Circles use a single member (``width_0 = diam``).  Round 2-spheres use
    latitude bands and flat tori use strips along the first factor, each
    band at least three mesh lengths thick so the audited multiplicity is 2.
    """
    kind = space.provenance.get("kind")
    mesh = sample_mesh(space)
    if kind == "circle" or kind == "line-segment":
        return Cover(space, (np.arange(space.n),)), 0
    if kind == "sphere2":
        u = np.asarray(space.coords["ambient"])
        polar = np.arccos(np.clip(u[:, 2], -1, 1)) * float(space.provenance.get("R", 1.0))
        span = math.pi * float(space.provenance.get("R", 1.0))
        nb = max(2, int(span // (3 * mesh)))
        return band_cover(space, polar, nb, 0.0, span), 1
    if kind == "flat-torus":
        x = np.asarray(space.coords["torus"])[:, 0]
        L1 = float(space.provenance["L1"])
        nb = max(2, int(L1 // (3 * mesh)))
        return band_cover(space, x, nb, 0.0, L1, periodic=True), 1
    raise ValueError(f"no width cover for model kind {kind!r}")


def analytic_inj(provenance: Mapping[str, Any]) -> float:
    """Injectivity radius of the model manifold described by ``provenance``."""
    kind = provenance.get("kind")
    if kind in ("circle", "sphere2"):
        return math.pi * float(provenance.get("R", 1.0))
    if kind == "flat-torus":
        return min(float(provenance["L1"]), float(provenance["L2"])) / 2
    raise ValueError(f"injectivity radius unknown for {kind!r}")


@dataclass(frozen=True)
class RadsphereCertificate:
    """Lower bound ``radsphere >= 1 / lip`` from a nonzero-degree map to ``S^n(1)``.

    Attributes
    ----------
    lower_bound : float
    lip : float
        Analytic Lipschitz constant of the map.
    audited_lip : float
        Largest ratio observed on sample pairs (never above ``lip``).
    degree : int
    description : str
    """

    lower_bound: float
    lip: float
    audited_lip: float
    degree: int
    description: str


def _sphere_dist(a: np.ndarray) -> np.ndarray:
    return np.arccos(np.clip(a @ a.T, -1.0, 1.0))


def radsphere_certificate(space: FiniteMetricSpace) -> RadsphereCertificate:
    """Explicit degree-one map onto the unit sphere of the same dimension.

    Round spheres of radius ``R`` use the rescaling (Lipschitz ``1/R``).
    Flat tori ``[0, L1) x [0, L2)`` collapse the complement of a disc of
    radius ``rho = min(L1, L2)/2`` to the south pole and wrap the disc by
    polar angle ``pi (1 - r/rho)`` (Lipschitz ``pi/rho``).
    """
    kind = space.provenance.get("kind")
    d = np.asarray(space.dist)
    iu = np.triu_indices(space.n, 1)
    if kind in ("circle", "sphere2"):
        R = float(space.provenance.get("R", 1.0))
        img = np.asarray(space.coords["ambient"])
        lip, desc = 1.0 / R, "rescaling onto the unit sphere"
    elif kind == "flat-torus":
        L1, L2 = float(space.provenance["L1"]), float(space.provenance["L2"])
        rho = min(L1, L2) / 2
        xy = np.asarray(space.coords["torus"]) - np.array([L1 / 2, L2 / 2])
        r = np.hypot(xy[:, 0], xy[:, 1])
        phi = np.arctan2(xy[:, 1], xy[:, 0])
        theta = np.where(r < rho, math.pi * (1 - r / rho), 0.0)
        img = np.stack(
            [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=1
        )
        lip, desc = math.pi / rho, "disc wrap with collapsed complement"
    else:
        raise ValueError(f"no radsphere certificate for {kind!r}")
    od = _sphere_dist(img)
    audited = float((od[iu] / d[iu]).max())
    if audited > lip * (1 + 1e-9):
        raise RuntimeError(f"map expands a sample pair: {audited} > {lip}")
    return RadsphereCertificate(1.0 / lip, lip, audited, 1, desc)


@dataclass(frozen=True)
class InvariantReport:
    """Inequality chain evaluated on one sampled model space.

    ``rows`` holds ``(space, invariant, value, bound, margin, pass)`` with
    ``margin = bound - value``; every flag is recomputable from the numbers.
    """

    space: str
    dim: int
    fillrad: float
    width: WidthBound
    diam: float
    inj: float
    radsphere: RadsphereCertificate | None
    rows: tuple = field(default=())

    @property
    def passed(self) -> bool:
        return all(r[5] for r in self.rows)


def invariant_report(
    space: FiniteMetricSpace,
    fillrad: float | None,
    width: WidthBound | None,
    inj: float | None = None,
    radsphere: RadsphereCertificate | None = None,
    name: str | None = None,
    tol: float = 1e-12,
    equality_tol: float | None = None,
) -> InvariantReport:
    """Evaluate the metric-invariant inequalities with margins.

    Parameters
    ----------
    fillrad : float
        Discrete filling radius estimate.
    width : WidthBound
        Certified ``width_{n-1}`` upper bound.
    inj : float, optional
        Injectivity radius (analytic for model spaces when omitted).
    radsphere : RadsphereCertificate, optional
    equality_tol : float, optional
        When given, also records ``|inj - (n+2) fillrad| <= equality_tol * inj``
        (the equality case of round circles).

    Raises
    ------
    IncompleteReport
        If the filling radius or width bound is missing.
    """
    if fillrad is None or width is None:
        raise IncompleteReport("fillrad estimate and width bound are both required")
    dim = int(space.provenance.get("dim", width.k + 1))
    if inj is None:
        inj = analytic_inj(space.provenance)
    label = name or str(space.provenance.get("kind", "space"))
    diam = space.diameter
    rows = []

    def add(inv, value, bound):
        margin = bound - value
        rows.append((label, inv, float(value), float(bound), float(margin), bool(margin >= -tol)))

    add(f"inj/(n+2)<=fillrad", inj / (dim + 2), fillrad)
    add(f"fillrad<=width_{width.k}", fillrad, width.value)
    add(f"width_{width.k}<=diam", width.value, diam)
    if radsphere is not None:
        add("radsphere<=(4/pi)fillrad", radsphere.lower_bound, 4 / math.pi * fillrad)
    if equality_tol is not None:
        add("|inj-(n+2)fillrad|/inj<=tol", abs(inj - (dim + 2) * fillrad) / inj, equality_tol)
    return InvariantReport(label, dim, float(fillrad), width, diam, float(inj), radsphere, tuple(rows))
