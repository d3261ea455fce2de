"""Matrix-valued Lipschitz fields and Lipschitz-controlled K-theory data.

A :class:`MatrixField` assigns a ``k x k`` complex matrix to every point of a
finite metric space.  Audits compute its exact Lipschitz constant over all
pairs (spectral norm over distance) and decide whether it is pointwise a
projection or a unitary.  Representatives are concrete fields; no group
quotients are formed.

The budget recursion ``L_j = A1 L_{j-1} + A2`` is evaluated with exact
rationals and compared against exponential envelopes ``C1 exp(C2 j)`` in
high precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import mpmath
import numpy as np

from .errors import DomainMismatch, IncompleteBoundary
from .metric import FiniteMetricSpace

__all__ = [
    "PAULI",
    "MatrixField",
    "FieldAudit",
    "LipschitzProjection",
    "LipschitzUnitary",
    "LmBudget",
    "PullbackResult",
    "audit_field",
    "radial_extend",
    "polar_ball",
    "boundary_field",
    "bott_projection",
    "scale_lipschitz",
    "lm_budget",
    "projection_path",
    "read_field_file",
    "write_field_file",
]

PROJ_TOL = 1e-10

PAULI = np.array(
    [[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex
)


@dataclass(frozen=True, eq=False)
class MatrixField:
    """Matrix-valued function on a finite metric space.

    Attributes
    ----------
    domain : FiniteMetricSpace
    values : ndarray of shape (n, k, k)
    at_infinity : ndarray of shape (k, k), optional
        Value at infinity for unitized representatives.
    """

    domain: FiniteMetricSpace
    values: np.ndarray
    at_infinity: np.ndarray | None = None

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=complex)
        if v.ndim != 3 or v.shape[1] != v.shape[2]:
            raise ValueError("values must have shape (n, k, k)")
        if v.shape[0] != self.domain.n:
            raise ValueError("one matrix per domain point is required")
        object.__setattr__(self, "values", v)

    @property
    def k(self) -> int:
        return int(self.values.shape[1])

    @property
    def sup_norm(self) -> float:
        return float(np.linalg.norm(self.values, ord=2, axis=(1, 2)).max())

    def lipschitz(self, chunk: int = 256) -> float:
        """Exact ``max ||F(x) - F(y)|| / d(x, y)`` over all pairs."""
        v, d = self.values, np.asarray(self.domain.dist)
        n = v.shape[0]
        best = 0.0
        for s in range(0, n, chunk):
            diff = v[s : s + chunk, None] - v[None, :]
            nrm = np.linalg.norm(diff, ord=2, axis=(2, 3))
            dd = d[s : s + chunk]
            mask = dd > 0
            if mask.any():
                best = max(best, float((nrm[mask] / dd[mask]).max()))
        return best


@dataclass(frozen=True)
class FieldAudit:
    """Result of :func:`audit_field`."""

    lip: float
    sup_norm: float
    projection_residual: float
    selfadjoint_residual: float
    unitary_residual: float
    is_projection: bool
    is_unitary: bool


def audit_field(field: MatrixField, tol: float = PROJ_TOL) -> FieldAudit:
    """Certified Lipschitz constant plus projection and unitary verdicts."""
    v = field.values
    vh = np.conj(np.swapaxes(v, 1, 2))
    eye = np.eye(field.k)
    proj = float(np.linalg.norm(v @ v - v, ord=2, axis=(1, 2)).max())
    sa = float(np.linalg.norm(vh - v, ord=2, axis=(1, 2)).max())
    uni = float(np.linalg.norm(v @ vh - eye, ord=2, axis=(1, 2)).max())
    return FieldAudit(
        field.lipschitz(), field.sup_norm, proj, sa, uni,
        bool(proj <= tol and sa <= tol), bool(uni <= tol),
    )


@dataclass(frozen=True)
class LipschitzProjection:
    """Projection-valued field with its rank at infinity.

    Raises
    ------
    ValueError
        If the field is not a projection at some point.
    """

    field: MatrixField
    rank_at_infinity: int

    def __post_init__(self) -> None:
        a = audit_field(self.field)
        if not a.is_projection:
            raise ValueError(f"not a projection field (residual {a.projection_residual:.2e})")
        object.__setattr__(self, "_audit", a)

    @property
    def lip(self) -> float:
        return self._audit.lip  # type: ignore[attr-defined]


@dataclass(frozen=True)
class LipschitzUnitary:
    """Unitary-valued field.

    Raises
    ------
    ValueError
        If the field is not unitary at some point.
    """

    field: MatrixField

    def __post_init__(self) -> None:
        a = audit_field(self.field)
        if not a.is_unitary:
            raise ValueError(f"not a unitary field (residual {a.unitary_residual:.2e})")
        object.__setattr__(self, "_audit", a)

    @property
    def lip(self) -> float:
        return self._audit.lip  # type: ignore[attr-defined]


# ---------------------------------------------------------------------------
# Radial extension
# ---------------------------------------------------------------------------


def _euclidean_space(points: np.ndarray, kind: str) -> FiniteMetricSpace:
    pts = np.asarray(points, dtype=float)
    d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    d = np.triu(d, 1)
    d = d + d.T
    d.setflags(write=False)
    return FiniteMetricSpace(d, None, {"kind": kind}, {"ambient": pts})


def polar_ball(boundary: np.ndarray, radii: Sequence[float]) -> np.ndarray:
    """Points ``r u`` for every boundary unit vector ``u`` and radius ``r``."""
    u = np.asarray(boundary, dtype=float)
    return np.concatenate([r * u for r in radii], axis=0)


def boundary_field(points: np.ndarray, values: np.ndarray) -> MatrixField:
    """Field on unit vectors with the chordal (Euclidean) metric of the ball model."""
    return MatrixField(_euclidean_space(points, "ball-boundary"), np.asarray(values))


def radial_extend(
    f: MatrixField, ball_points: np.ndarray, tol: float = 1e-12
) -> tuple[MatrixField, float]:
    """Extend a boundary field to the ball by ``f(x/|x|)(2|x| - 1)``.

    The extension vanishes for ``|x| <= 1/2`` and its Lipschitz constant is
    at most ``2L + 2||f||``, independent of the dimension.

    Parameters
    ----------
    f : MatrixField
        Field on unit vectors (``f.domain.coords["ambient"]``) with the
        Euclidean metric, e.g. from :func:`boundary_field`.
    ball_points : ndarray of shape (m, n)
        Points of the closed unit ball.

    Returns
    -------
    field : MatrixField
        The extension on ``ball_points`` (Euclidean metric).
    bound : float
        ``2 lip(f) + 2 ||f||``.

    Raises
    ------
    IncompleteBoundary
        If the direction of some ball point with ``|x| > 1/2`` is not a
        boundary sample point.
    """
    u = np.asarray(f.domain.coords["ambient"], dtype=float)
    x = np.asarray(ball_points, dtype=float)
    r = np.linalg.norm(x, axis=1)
    if (r > 1 + tol).any():
        raise ValueError("ball points must have norm at most 1")
    vals = np.zeros((len(x), f.k, f.k), dtype=complex)
    active = r > 0.5
    if active.any():
        dirs = x[active] / r[active, None]
        gap = np.linalg.norm(dirs[:, None, :] - u[None, :, :], axis=2)
        j = gap.argmin(axis=1)
        if gap[np.arange(len(j)), j].max() > 1e-9:
            raise IncompleteBoundary("a ball point points to a direction missing from the boundary sample")
        vals[active] = f.values[j] * (2 * r[active] - 1)[:, None, None]
    out = MatrixField(_euclidean_space(x, "ball"), vals)
    return out, 2 * f.lipschitz() + 2 * f.sup_norm


# ---------------------------------------------------------------------------
# Generators and pullbacks
# ---------------------------------------------------------------------------


def bott_projection(space: FiniteMetricSpace) -> LipschitzProjection:
    """``P(u) = (I + u . sigma) / 2`` on a sampled round 2-sphere.

    Requires unit vectors in ``space.coords["ambient"]``; rank one at every
    point (the domain is compact, so the value at infinity is vacuous).
    """
    if "ambient" not in space.coords:
        raise DomainMismatch("space carries no unit-vector coordinates")
    u = np.asarray(space.coords["ambient"], dtype=float)
    if u.shape[1] != 3:
        raise DomainMismatch("the Bott projection needs points of S^2")
    vals = 0.5 * (np.eye(2) + np.einsum("ni,ijk->njk", u, PAULI))
    return LipschitzProjection(MatrixField(space, vals), 1)


@dataclass(frozen=True)
class PullbackResult:
    """Pullback ``g* F`` with its audited and predicted Lipschitz constants."""

    field: MatrixField
    audited_lip: float
    bound: float
    slack: float
    snap_distance: float


def scale_lipschitz(
    fld: MatrixField | LipschitzProjection | LipschitzUnitary,
    new_domain: FiniteMetricSpace,
    g: np.ndarray,
    lam: float,
    snap_tol: float = 1e-9,
    metric: str = "index",
) -> PullbackResult:
    """Pull a field back along a map ``g`` with Lipschitz constant ``lam``.

    Parameters
    ----------
    g : ndarray
        With ``metric="index"``: point indices of the field's domain.
        Otherwise image coordinates that are snapped to the nearest domain
        point by ``coords["ambient"]``, using ``"euclidean"`` or ``"sphere"``
        (geodesic on the unit sphere scaled by the domain radius) distances.
    lam : float
        Lipschitz constant of ``g``.

    Returns
    -------
    PullbackResult
        ``bound = lam * lip(F) + slack`` where the snapping slack is
        ``2 * lip(F) * snap / (smallest positive distance of new_domain)``.

    Raises
    ------
    DomainMismatch
        If some snap distance exceeds ``snap_tol``.
    """
    base = fld.field if isinstance(fld, (LipschitzProjection, LipschitzUnitary)) else fld
    lip = base.lipschitz()
    if metric == "index":
        idx = np.asarray(g, dtype=int)
        snap = 0.0
    else:
        u = np.asarray(base.domain.coords["ambient"], dtype=float)
        y = np.asarray(g, dtype=float)
        if metric == "euclidean":
            gap = np.linalg.norm(y[:, None, :] - u[None, :, :], axis=2)
        elif metric == "sphere":
            R = float(base.domain.provenance.get("R", 1.0))
            yn = y / np.linalg.norm(y, axis=1, keepdims=True)
            gap = R * np.arccos(np.clip(yn @ u.T, -1, 1))
        else:
            raise ValueError("metric must be 'index', 'euclidean' or 'sphere'")
        idx = gap.argmin(axis=1)
        snap = float(gap[np.arange(len(idx)), idx].max())
        if snap > snap_tol:
            raise DomainMismatch(f"snap distance {snap:.3e} exceeds tolerance {snap_tol:.3e}")
    if len(idx) != new_domain.n:
        raise ValueError("g must give one image per new domain point")
    pulled = MatrixField(new_domain, base.values[idx], base.at_infinity)
    d = np.asarray(new_domain.dist)
    dmin = d[d > 0].min() if (d > 0).any() else np.inf
    slack = 2 * lip * snap / dmin
    return PullbackResult(pulled, pulled.lipschitz(), lam * lip + slack, slack, snap)


# ---------------------------------------------------------------------------
# Budget recursion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LmBudget:
    """Lipschitz budget ``L_0..L_m`` with the exponential-envelope check.

    Attributes
    ----------
    m : int
    A1, A2, L0 : Fraction
    sequence : tuple of Fraction
        ``L_j`` from the iterated recursion.
    closed_form : Fraction
        ``A1^m L0 + A2 (A1^m - 1)/(A1 - 1)`` (or ``L0 + m A2`` when
        ``A1 = 1``).
    C1, C2 : float
    consistent : bool
        ``L_j <= C1 exp(C2 j)`` for every ``j <= m``.
    envelope_margin : float
        Smallest ``log(C1 exp(C2 j)) - log(L_j)`` over positive ``L_j``.
    """

    m: int
    A1: Fraction
    A2: Fraction
    L0: Fraction
    sequence: tuple
    closed_form: Fraction
    C1: float
    C2: float
    consistent: bool
    envelope_margin: float

    @property
    def Lm(self) -> Fraction:
        return self.sequence[-1]

    def L(self, j: int) -> Fraction:
        return self.sequence[j]


def lm_budget(
    m: int,
    A1: float | int | Fraction,
    A2: float | int | Fraction,
    L0: float | int | Fraction = 0,
    C1: float = 1e20,
    C2: float = 50.0,
    dps: int = 60,
) -> LmBudget:
    """Evaluate ``L_j = A1 L_{j-1} + A2`` exactly and check ``L_j <= C1 e^{C2 j}``.

    Raises
    ------
    ValueError
        If ``A1 < 1``, ``A2 < 0`` or ``m < 0``.
    """
    a1, a2, l0 = Fraction(A1), Fraction(A2), Fraction(L0)
    if a1 < 1 or a2 < 0 or m < 0:
        raise ValueError("need A1 >= 1, A2 >= 0 and m >= 0")
    seq = [l0]
    for _ in range(m):
        seq.append(a1 * seq[-1] + a2)
    if a1 == 1:
        closed = l0 + m * a2
    else:
        closed = a1**m * l0 + a2 * (a1**m - 1) / (a1 - 1)
    if closed != seq[-1]:  # pragma: no cover - exact arithmetic guard
        raise RuntimeError("closed form disagrees with the recursion")
    margin = mpmath.inf
    with mpmath.workdps(dps):
        for j, lj in enumerate(seq):
            if lj > 0:
                gap = mpmath.log(mpmath.mpf(C1)) + C2 * j - mpmath.log(mpmath.mpf(lj.numerator) / lj.denominator)
                margin = min(margin, gap)
        margin_f = float(margin)
    return LmBudget(m, a1, a2, l0, tuple(seq), closed, float(C1), float(C2), margin_f >= 0, margin_f)


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------


def projection_path(
    p: LipschitzProjection, q: LipschitzProjection, steps: int = 8
) -> list[MatrixField]:
    """Explicit path of projection fields from ``p`` to ``q``.

    Each point of the linear interpolation ``(1-s) p + s q`` is retracted
    onto the spectral projection of its eigenvalues above ``1/2``.  This is
    well defined because ``sup ||p - q|| < 1`` keeps ``1/2`` out of the
    spectrum (the interpolant of two projections at distance ``< 1`` has no
    eigenvalue ``1/2``).

    Raises
    ------
    ValueError
        If the fields live on different domains or ``sup ||p - q|| >= 1``.
    """
    a, b = p.field, q.field
    if a.domain is not b.domain and a.domain.n != b.domain.n:
        raise ValueError("fields live on different domains")
    gap = float(np.linalg.norm(a.values - b.values, ord=2, axis=(1, 2)).max())
    if gap >= 1:
        raise ValueError(f"sup ||p - q|| = {gap:.3f} >= 1; no straight-line witness")
    path = []
    for s in np.linspace(0.0, 1.0, steps + 1):
        m = (1 - s) * a.values + s * b.values
        m = 0.5 * (m + np.conj(np.swapaxes(m, 1, 2)))
        w, v = np.linalg.eigh(m)
        keep = (w > 0.5).astype(float)
        vals = np.einsum("nij,nj,nkj->nik", v, keep, np.conj(v))
        path.append(MatrixField(a.domain, vals))
    return path


def write_field_file(fld: MatrixField, path: str | Path) -> None:
    """Header ``n k`` then one row per point: row-major ``re im`` pairs."""
    n, k = fld.values.shape[0], fld.k
    lines = [f"{n} {k}"]
    for mat in fld.values:
        flat = mat.reshape(-1)
        lines.append(" ".join(f"{float(z.real)!r} {float(z.imag)!r}" for z in flat))
    Path(path).write_text("\n".join(lines) + "\n")


def read_field_file(domain: FiniteMetricSpace, path: str | Path) -> MatrixField:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    n, k = int(rows[0][0]), int(rows[0][1])
    vals = np.zeros((n, k, k), dtype=complex)
    for i, row in enumerate(rows[1:]):
        nums = np.array([float(x) for x in row])
        vals[i] = (nums[0::2] + 1j * nums[1::2]).reshape(k, k)
    return MatrixField(domain, vals)
