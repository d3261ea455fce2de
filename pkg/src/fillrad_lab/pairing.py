"""Quantitative index pairing for gapped graded operators.

Pipeline for an odd operator ``D = [[0, D+], [D+*, 0]]`` with spectral gap
``sigma`` and projection fields ``p``, ``q`` over its spatial basis:

1. ``chi(D/t) = [[0, U], [V, 0]]`` for the odd normalizing function ``chi``.
2. ``P_t = [[1-(1-UV)^2, (2-UV) U (1-VU)], [V (1-UV), (1-VU)^2]]``.
3. ``alpha = P_t p`` and ``beta = P_t q`` (``q`` is flat, so ``beta`` is an
   exact idempotent).
4. The difference element ``d(alpha, beta)`` and ``e = d(b, b)``.
5. ``Theta`` (holomorphic calculus on ``|z - 1| = 1/2``) and the integer
   ``rank Theta(d) - rank e``.

The difference element is ``Z(beta)^{-1} diag(alpha, 1-beta, 0, 0) Z(beta)``.
For an idempotent ``beta`` its nonzero part occupies two of the four block
rows and columns; :func:`difference_blocks` returns that part.  Since the
outer conjugation by ``Z(b)`` is unitary, all defect norms of the full
32k-dimensional element equal those of the reduced one, and
``index = tr Theta(alpha) - tr beta``.  :func:`build_package` with
``dense=True`` carries out the full construction for small models.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import svds
from scipy.special import sici

from .errors import (
    BadControlFunction,
    FitUnreliable,
    FluxAliased,
    IndeterminateIndex,
    SpectralFailure,
    SpectralGapLost,
    SupportViolation,
)
from .ktheory import PAULI, LmBudget

__all__ = [
    "chi_eval",
    "GradedOperator",
    "chi_of_operator",
    "propagation_width",
    "path_dirac",
    "z_matrix",
    "z_inverse",
    "difference_d",
    "difference_blocks",
    "ThetaResult",
    "theta",
    "DifferencePackage",
    "build_package",
    "PairingReport",
    "pairing",
    "LatticeModel",
    "lattice_dirac_torus",
    "bott_lattice_field",
    "flat_field",
    "lattice_lipschitz",
    "kernel_index",
    "FitResult",
    "fit_through_origin",
    "Constants",
    "estimate_constants",
    "ThresholdRow",
    "vanishing_experiment",
    "MainBound",
    "main_bound",
    "spectral_norm",
    "wilson_gap_bound",
]


# ---------------------------------------------------------------------------
# Normalizing function
# ---------------------------------------------------------------------------


def chi_eval(x):
    """``chi(x) = (2/pi) int_0^x (1 - cos y)/y^2 dy``, odd with limits ``+-1``.

    Closed form ``(2/pi)((cos x - 1)/x + Si(x))``; a Taylor series is used
    for ``|x| < 1e-4``.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-4
    xs = x[small]
    out[small] = (2 / math.pi) * (xs / 2 - xs**3 / 72 + xs**5 / 3600)
    xl = x[~small]
    # half-angle form avoids cancellation in 1 - cos x
    out[~small] = (2 / math.pi) * (sici(xl)[0] - 2 * np.sin(xl / 2) ** 2 / xl)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------


def spectral_norm(m: np.ndarray, dense_below: int = 600) -> float:
    """Largest singular value (ARPACK with a fixed start vector for large inputs)."""
    m = np.asarray(m)
    if min(m.shape) <= dense_below:
        return float(np.linalg.norm(m, 2))
    v0 = np.ones(m.shape[1], dtype=m.dtype) / math.sqrt(m.shape[1])
    try:
        s = svds(m, k=1, v0=v0, return_singular_vectors=False, tol=1e-12, maxiter=5000)
    except Exception:  # pragma: no cover - ARPACK fallback
        return float(np.linalg.norm(m, 2))
    return float(s[0])


@dataclass(eq=False)
class GradedOperator:
    """Odd Hermitian operator ``[[0, D+], [D+*, 0]]``.

    Attributes
    ----------
    dplus : ndarray of shape (n, n)
    sites : ndarray, optional
        Spatial coordinates of the ``n`` basis vectors.
    graph_distance : ndarray, optional
        Graph distance between basis vectors (for locality checks).
    """

    dplus: np.ndarray
    sites: np.ndarray | None = None
    graph_distance: np.ndarray | None = None
    _svd: tuple | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.dplus = np.asarray(self.dplus, dtype=complex)
        if self.dplus.ndim != 2 or self.dplus.shape[0] != self.dplus.shape[1]:
            raise ValueError("D+ must be square")

    @property
    def n(self) -> int:
        return int(self.dplus.shape[0])

    @property
    def D(self) -> np.ndarray:
        z = np.zeros_like(self.dplus)
        return np.block([[z, self.dplus], [self.dplus.conj().T, z]])

    def svd(self):
        if self._svd is None:
            try:
                self._svd = np.linalg.svd(self.dplus)
            except np.linalg.LinAlgError as exc:  # pragma: no cover
                raise SpectralFailure(str(exc)) from exc
        return self._svd

    @property
    def sigma(self) -> float:
        """Spectral gap: smallest singular value of ``D+``."""
        return float(self.svd()[1].min())


def chi_of_operator(op: GradedOperator | np.ndarray, t: float):
    """``chi(D/t)`` and its off-diagonal blocks ``U_t``, ``V_t = U_t*``.

    A :class:`GradedOperator` is handled through the singular value
    decomposition ``D+ = W S Vh`` (``U_t = W chi(S/t) Vh``).  A general
    Hermitian matrix is handled by eigendecomposition and only ``chi(D/t)``
    is returned in the first slot.

    Raises
    ------
    SpectralFailure
        If the decomposition fails.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    if isinstance(op, GradedOperator):
        W, s, Vh = op.svd()
        U = (W * chi_eval(s / t)) @ Vh
        V = U.conj().T
        z = np.zeros_like(U)
        return np.block([[z, U], [V, z]]), U, V
    D = np.asarray(op)
    try:
        w, Q = np.linalg.eigh(D)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise SpectralFailure(str(exc)) from exc
    return (Q * chi_eval(w / t)) @ Q.conj().T, None, None


def propagation_width(
    D: np.ndarray, graph_distance: np.ndarray, t: float, floor: float = 1e-10
) -> int:
    """Smallest ``b`` with ``|chi(D/t)_{ij}| < floor`` whenever ``dist(i, j) > b``."""
    X = chi_of_operator(np.asarray(D), t)[0]
    g = np.asarray(graph_distance)
    big = np.abs(X) >= floor
    return int(g[big].max()) if big.any() else 0


def path_dirac(n: int, m0: float = 0.5) -> tuple[GradedOperator, np.ndarray]:
    """Graded Dirac operator on a path: ``D+ = m0 + (forward shift - 1)``.

    Returns the operator and the graph distance between the ``2n`` basis
    vectors (both chiralities of a site sit at the same vertex).
    """
    dplus = (m0 - 1) * np.eye(n) + np.eye(n, k=1)
    i = np.arange(n)
    g = np.abs(i[:, None] - i[None, :])
    return GradedOperator(dplus, i.astype(float), g), np.block([[g, g], [g, g]])


# ---------------------------------------------------------------------------
# Difference construction
# ---------------------------------------------------------------------------


def z_matrix(beta: np.ndarray) -> np.ndarray:
    """``Z(b) = [[b,0,1-b,0],[1-b,0,0,b],[0,0,b,1-b],[0,1,0,0]]``."""
    b = np.asarray(beta)
    i, o = np.eye(len(b), dtype=b.dtype), np.zeros_like(b)
    return np.block([[b, o, i - b, o], [i - b, o, o, b], [o, o, b, i - b], [o, i, o, o]])


def z_inverse(beta: np.ndarray) -> np.ndarray:
    """``Z(b)^{-1} = [[b,1-b,0,0],[0,0,0,1],[1-b,0,b,0],[0,b,1-b,0]]`` for idempotent ``b``."""
    b = np.asarray(beta)
    i, o = np.eye(len(b), dtype=b.dtype), np.zeros_like(b)
    return np.block([[b, i - b, o, o], [o, o, o, i], [i - b, o, b, o], [o, b, i - b, o]])


def difference_d(alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Full difference element ``Z(b)^{-1} diag(a, 1-b, 0, 0) Z(b)``."""
    a, b = np.asarray(alpha), np.asarray(beta)
    i, o = np.eye(len(b), dtype=np.result_type(a, b)), np.zeros_like(b, dtype=np.result_type(a, b))
    mid = np.block([[a, o, o, o], [o, i - b, o, o], [o, o, o, o], [o, o, o, o]])
    return z_inverse(b) @ mid @ z_matrix(b)


def difference_blocks(alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Nonzero part of :func:`difference_d` for an idempotent ``beta``.

    ``[[1-b+bab, ba(1-b)], [(1-b)ab, (1-b)a(1-b)]]``, occupying block rows
    and columns 1 and 3 of the full element.
    """
    a, b = np.asarray(alpha), np.asarray(beta)
    i = np.eye(len(b))
    c = i - b
    ab = a @ b
    ac = a @ c
    return np.block([[c + b @ ab, b @ ac], [c @ ab, c @ ac]])


# ---------------------------------------------------------------------------
# Theta
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ThetaResult:
    """Idempotent ``Theta(d)`` with diagnostics.

    Attributes
    ----------
    proj : ndarray
    rank : int
        Number of eigenvalues with real part above ``1/2``.
    residual : float
        ``||Theta^2 - Theta||``.
    agreement : float or None
        Spectral versus contour discrepancy (when cross-checked).
    nodes : int or None
        Quadrature nodes used by the contour method.
    """

    proj: np.ndarray
    rank: int
    residual: float
    agreement: float | None
    nodes: int | None


def _theta_spectral(T: np.ndarray, Q: np.ndarray, dim: int) -> np.ndarray:
    # T is upper triangular with the selected eigenvalues leading
    n = T.shape[0]
    if dim == 0:
        return np.zeros((n, n), dtype=complex)
    if dim == n:
        return np.eye(n, dtype=complex)
    T11, T12, T22 = T[:dim, :dim], T[:dim, dim:], T[dim:, dim:]
    Y = sla.solve_sylvester(T11, -T22, T12)
    P = np.zeros((n, n), dtype=complex)
    P[:dim, :dim] = np.eye(dim)
    P[:dim, dim:] = Y
    return Q @ P @ Q.conj().T


def _contour_terms(T: np.ndarray, nodes: int, start: int, step: int) -> np.ndarray:
    n = T.shape[0]
    acc = np.zeros((n, n), dtype=complex)
    eye = np.eye(n)
    for j in range(start, nodes, step):
        w = 0.5 * np.exp(2j * math.pi * j / nodes)
        acc += w * sla.solve_triangular((1 + w) * eye - T, eye)
    return acc


def _theta_contour(T: np.ndarray, tol: float, max_nodes: int) -> tuple[np.ndarray, int]:
    # trapezoid nodes nest under doubling, so each refinement reuses the previous sum
    nodes = 32
    total = _contour_terms(T, nodes, 0, 1)
    prev = total / nodes
    while True:
        total = total + _contour_terms(T, 2 * nodes, 1, 2)
        nodes *= 2
        cur = total / nodes
        if spectral_norm(cur - prev) < tol or nodes >= max_nodes:
            return cur, nodes
        prev = cur


def theta(
    d: np.ndarray,
    method: str = "spectral",
    crosscheck: bool = True,
    tol: float = 1e-8,
    max_nodes: int = 4096,
    defect: float | None = None,
) -> ThetaResult:
    """Holomorphic idempotent of an almost idempotent ``d``.

    ``Theta(d) = (2 pi i)^{-1} oint (xi - d)^{-1} d xi`` over ``|z - 1| = 1/2``.
    The spectral method projects onto eigenvalues with real part above
    ``1/2`` along the complementary invariant subspace (sorted Schur form
    plus a Sylvester solve).  The contour method applies the trapezoid rule
    to the resolvent, doubling the node count from 32 (so at least 64 nodes) until successive
    results agree to ``tol``.  Both are evaluated on the Schur form.

    Raises
    ------
    SpectralGapLost
        If ``||d^2 - d|| >= 1/4``.
    """
    d = np.asarray(d, dtype=complex)
    if defect is None:
        defect = spectral_norm(d @ d - d)
    if defect >= 0.25:
        raise SpectralGapLost(f"||d^2 - d|| = {defect:.4f} >= 1/4")
    T, Q, dim = sla.schur(d, output="complex", sort=lambda z: z.real > 0.5)
    spec_t = _theta_spectral(T, np.eye(len(T)), dim)
    spec = Q @ spec_t @ Q.conj().T
    cont, nodes, agree = None, None, None
    if crosscheck or method == "contour":
        cont_t, nodes = _theta_contour(T, tol, max_nodes)
        # Q is unitary, so the comparison can stay in the Schur basis
        agree = spectral_norm(cont_t - spec_t)
        cont = Q @ cont_t @ Q.conj().T
    proj = cont if method == "contour" else spec
    if method not in ("spectral", "contour"):
        raise ValueError("method must be 'spectral' or 'contour'")
    return ThetaResult(proj, int(dim), spectral_norm(proj @ proj - proj), agree, nodes)


# ---------------------------------------------------------------------------
# Package and pairing
# ---------------------------------------------------------------------------


def _site_blocks(field: np.ndarray) -> np.ndarray:
    """Block-diagonal operator of a ``(n, k, k)`` field on sites (x) bundle."""
    f = np.asarray(field, dtype=complex)
    n, k = f.shape[0], f.shape[1]
    out = np.zeros((n * k, n * k), dtype=complex)
    for i in range(n):
        out[i * k : (i + 1) * k, i * k : (i + 1) * k] = f[i]
    return out


def _is_flat(field: np.ndarray) -> bool:
    f = np.asarray(field)
    return bool(np.abs(f - f[0]).max() < 1e-14)


@dataclass(eq=False)
class DifferencePackage:
    """All intermediates of the difference construction at one scale ``t``.

    Attributes
    ----------
    t : float
    U, V : ndarray
        Off-diagonal blocks of ``chi(D/t)``.
    P : ndarray
        ``P_t`` tensored with the bundle identity.
    alpha, beta : ndarray
        ``P_t p`` and ``P_t q``.
    a, b : ndarray
        Reduced difference elements ``d(alpha, beta)`` and
        ``d(e11 p, e11 q)``.
    defect_idem : float
        ``||d^2 - d||``.
    defect_e : float
        ``||d - e||``.
    dense : dict, optional
        Full-size ``d``, ``e`` when built with ``dense=True``.
    """

    t: float
    sigma: float
    U: np.ndarray
    V: np.ndarray
    P: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    a: np.ndarray
    b: np.ndarray
    defect_idem: float
    defect_e: float
    k: int
    dense: dict | None = None

    @property
    def dimension(self) -> int:
        """Size of the full difference element (``32 k`` per site)."""
        return 4 * 2 * self.a.shape[0]


def build_package(
    op: GradedOperator,
    t: float,
    p: np.ndarray,
    q: np.ndarray,
    support: Sequence[int] | np.ndarray | None = None,
    dense: bool = False,
) -> DifferencePackage:
    """Build ``d_{t,p,q}`` and its defect norms.

    Parameters
    ----------
    op : GradedOperator
    t : float
    p, q : ndarray of shape (n, k, k)
        Projection fields on the ``n`` sites; ``q`` must be constant.
    support : sequence of int or bool mask, optional
        Sites where ``p`` and ``q`` may differ.
    dense : bool
        Also form the full 4-block elements (small models only).

    Raises
    ------
    SupportViolation
        If ``p - q`` is nonzero outside ``support``.
    """
    p, q = np.asarray(p, dtype=complex), np.asarray(q, dtype=complex)
    n = op.n
    if p.shape[0] != n or q.shape != p.shape:
        raise ValueError("p and q need one k x k matrix per site")
    if support is not None:
        mask = np.zeros(n, dtype=bool)
        mask[np.asarray(support)] = True
        if np.asarray(support).dtype == bool:
            mask = np.asarray(support)
        outside = np.abs(p[~mask] - q[~mask]).max(initial=0.0)
        if outside > 1e-12:
            raise SupportViolation(f"p - q reaches {outside:.2e} outside the declared support")
    if not _is_flat(q):
        raise ValueError("q must be a constant field")
    k = p.shape[1]
    _, U, V = chi_of_operator(op, t)
    ik = np.eye(k)
    Uk, Vk = np.kron(U, ik), np.kron(V, ik)
    eye = np.eye(n * k)
    UV, VU = Uk @ Vk, Vk @ Uk
    P = np.block(
        [[eye - (eye - UV) @ (eye - UV), (2 * eye - UV) @ Uk @ (eye - VU)],
         [Vk @ (eye - UV), (eye - VU) @ (eye - VU)]]
    )
    pb, qb = _site_blocks(p), _site_blocks(q)
    p2, q2 = np.kron(np.eye(2), pb), np.kron(np.eye(2), qb)
    alpha, beta = P @ p2, P @ q2
    e11 = np.zeros((2, 2))
    e11[0, 0] = 1
    a = difference_blocks(alpha, beta)
    b = difference_blocks(np.kron(e11, pb), np.kron(e11, qb))
    defect_idem = spectral_norm(a @ a - a)
    defect_e = spectral_norm(a - b)
    extra = None
    if dense:
        A = difference_d(alpha, beta)
        B = difference_d(np.kron(e11, pb), np.kron(e11, qb))
        Dfull = difference_d(A, B)
        E = difference_d(B, B)
        extra = {"a": A, "b": B, "d": Dfull, "e": E}
    return DifferencePackage(
        float(t), op.sigma, U, V, P, alpha, beta, a, b, defect_idem, defect_e, k, extra
    )


@dataclass(frozen=True)
class PairingReport:
    """Index pairing at one scale with its certificates.

    Attributes
    ----------
    index : int
    raw : float
        ``tr Theta(alpha) - tr beta`` before rounding.
    t, sigma : float
    defect_idem, defect_e : float
        ``||d^2 - d||`` and ``||d - e||``.
    theta_residual : float
        ``||Theta^2 - Theta||``.
    theta_agreement : float or None
        Spectral versus contour discrepancy.
    theta_minus_e : float
        ``||Theta(d) - e||``.
    equivalent_to_e : bool
        ``||Theta(d) - e|| < 1`` (forces index 0).
    """

    index: int
    raw: float
    t: float
    sigma: float
    defect_idem: float
    defect_e: float
    theta_residual: float
    theta_agreement: float | None
    theta_minus_e: float
    equivalent_to_e: bool


def pairing(
    op: GradedOperator,
    p: np.ndarray,
    q: np.ndarray,
    t: float,
    support=None,
    crosscheck: bool = True,
    package: DifferencePackage | None = None,
) -> PairingReport:
    """Integer ``[Theta(d_{t,p,q})] - [e]`` at scale ``t``.

    Raises
    ------
    SpectralGapLost
        If ``||d^2 - d|| >= 1/4`` at this ``t``.
    IndeterminateIndex
        If the trace difference is more than 0.1 from an integer.
    """
    pkg = package or build_package(op, t, p, q, support)
    if pkg.defect_idem >= 0.25:
        raise SpectralGapLost(f"||d^2 - d|| = {pkg.defect_idem:.4f} >= 1/4 at t = {t}")
    th = theta(pkg.alpha, crosscheck=crosscheck, defect=spectral_norm(pkg.alpha @ pkg.alpha - pkg.alpha))
    raw = float(np.trace(th.proj).real - np.trace(pkg.beta).real)
    idx = int(round(raw))
    if abs(raw - idx) >= 0.1:
        raise IndeterminateIndex(f"trace difference {raw:.4f} is not near an integer")
    theta_a = difference_blocks(th.proj, pkg.beta)
    gap_e = spectral_norm(theta_a - pkg.b)
    return PairingReport(
        idx, raw, float(t), pkg.sigma, pkg.defect_idem, pkg.defect_e, th.residual,
        th.agreement, gap_e, bool(gap_e < 1),
    )


# ---------------------------------------------------------------------------
# Lattice model
# ---------------------------------------------------------------------------


def wilson_gap_bound(m0: float, r: float = 1.0) -> float:
    """Lower bound ``m0 + r - sqrt(1 + r^2)`` on the untwisted Wilson-Dirac gap."""
    return m0 + r - math.sqrt(1 + r * r)


@dataclass(eq=False)
class LatticeModel:
    """Twisted Wilson-Dirac operator on an ``N x N`` torus with matched fields."""

    N: int
    flux: int
    op: GradedOperator
    p: np.ndarray
    q: np.ndarray
    support: np.ndarray
    positions: np.ndarray
    params: dict


def _torus_distance(N: int) -> np.ndarray:
    i, j = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    pos = np.stack([i.ravel(), j.ravel()], axis=1)
    dd = np.abs(pos[:, None, :] - pos[None, :, :])
    dd = np.minimum(dd, N - dd)
    return np.hypot(dd[..., 0], dd[..., 1])


def bott_lattice_field(
    N: int, rho: float, degree: int, lam: float = 1.0, center: tuple[float, float] | None = None
) -> np.ndarray:
    """Projection field ``(1 + n . sigma)/2`` of winding ``degree`` on a disc.

    ``n = (sin th cos(k phi), sin th sin(k phi), cos th)`` with
    ``th = lam * pi * (1 - r/rho)`` inside the disc of radius ``rho`` and
    ``th = 0`` outside, so the field equals ``e11`` off the disc.  With
    ``lam = 1`` the map has degree ``degree``; smaller ``lam`` and
    ``degree = 0`` give a trivial class with Lipschitz constant
    proportional to ``lam``.
    """
    c = (N - 1) / 2 if center is None else center
    i, j = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    x, y = i - c[0] if isinstance(c, tuple) else i - c, j - c[1] if isinstance(c, tuple) else j - c
    r = np.hypot(x, y)
    phi = np.arctan2(y, x)
    th = np.where(r < rho, lam * math.pi * (1 - r / rho), 0.0)
    nvec = np.stack(
        [np.sin(th) * np.cos(degree * phi), np.sin(th) * np.sin(degree * phi), np.cos(th)], axis=-1
    ).reshape(-1, 3)
    return 0.5 * (np.eye(2) + np.einsum("ni,ijk->njk", nvec, PAULI))


def flat_field(n: int) -> np.ndarray:
    """Constant ``e11`` field on ``n`` sites."""
    e = np.zeros((2, 2), dtype=complex)
    e[0, 0] = 1
    return np.tile(e, (n, 1, 1))


def lattice_lipschitz(field: np.ndarray, N: int) -> float:
    """Exact Lipschitz constant of a site field for the flat torus metric."""
    f = np.asarray(field)
    d = _torus_distance(N)
    diff = f[:, None] - f[None, :]
    nrm = np.linalg.norm(diff, ord=2, axis=(2, 3))
    m = d > 0
    return float((nrm[m] / d[m]).max())


def lattice_dirac_torus(
    N: int, flux: int = 0, m0: float = 1.0, r: float = 1.0, rho: float | None = None
) -> LatticeModel:
    """Wilson-Dirac operator with ``flux`` quanta on the ``N x N`` torus.

    ``D+ = m0 + (T_x - T_x*)/2 + i (T_y - T_y*)/2 + (r/2)(4 - T_x - T_x* - T_y - T_y*)``
    where ``T_x``, ``T_y`` are the gauge-covariant unit translations in a
    Landau gauge (``y`` links carry ``exp(2 pi i flux x / N^2)``; ``x``
    links across the seam carry ``exp(-2 pi i flux y / N)``).  The matched
    fields are a winding-``flux`` Bott projection ``p`` on a disc of
    radius ``rho`` (default ``3N/8``) and the flat ``q = e11``.

    Raises
    ------
    FluxAliased
        If ``|flux| > N/4``.
    """
    if N < 8:
        raise ValueError("N must be at least 8")
    if abs(flux) > N / 4:
        raise FluxAliased(f"flux {flux} exceeds N/4 = {N / 4} on an N = {N} lattice")
    n = N * N
    idx = lambda x, y: (x % N) * N + (y % N)  # noqa: E731
    Tx = np.zeros((n, n), dtype=complex)
    Ty = np.zeros((n, n), dtype=complex)
    for x in range(N):
        for y in range(N):
            Ty[idx(x, y), idx(x, y + 1)] = np.exp(2j * math.pi * flux * x / n)
            Tx[idx(x, y), idx(x + 1, y)] = (
                np.exp(-2j * math.pi * flux * y / N) if x == N - 1 else 1.0
            )
    eye = np.eye(n)
    dplus = (
        m0 * eye
        + 0.5 * (Tx - Tx.conj().T)
        + 0.5j * (Ty - Ty.conj().T)
        + 0.5 * r * (4 * eye - Tx - Tx.conj().T - Ty - Ty.conj().T)
    )
    rho = 3 * N / 8 if rho is None else rho
    i, j = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    pos = np.stack([i.ravel(), j.ravel()], axis=1).astype(float)
    c = (N - 1) / 2
    support = np.flatnonzero(np.hypot(pos[:, 0] - c, pos[:, 1] - c) < rho)
    op = GradedOperator(dplus, pos, None)
    p = bott_lattice_field(N, rho, flux)
    q = flat_field(n)
    return LatticeModel(N, flux, op, p, q, support, pos, {"m0": m0, "r": r, "rho": rho})


def kernel_index(op: GradedOperator, tol: float = 1e-8) -> int:
    """``dim ker D+ - dim ker D-`` from singular values below ``tol``."""
    s_plus = np.linalg.svd(op.dplus, compute_uv=False)
    s_minus = np.linalg.svd(op.dplus.conj().T, compute_uv=False)
    return int((s_plus < tol).sum()) - int((s_minus < tol).sum())


# ---------------------------------------------------------------------------
# Constants and threshold
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    """Least-squares line through the origin ``y = slope * x``."""

    slope: float
    r2: float
    residuals: tuple


def fit_through_origin(x: Sequence[float], y: Sequence[float]) -> FitResult:
    """Slope through the origin with the centred coefficient of determination."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if len(x) < 2:
        raise ValueError("need at least two points")
    slope = float(x @ y / (x @ x))
    res = y - slope * x
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float(res @ res) / ss_tot if ss_tot > 0 else 1.0
    return FitResult(slope, r2, tuple(float(v) for v in res))


@dataclass(frozen=True)
class Constants:
    """Fitted ``c1`` (from ``||d^2-d||`` against ``L/t``) and ``c2`` (``||d-e||`` against ``t/sigma``)."""

    c1: float
    c2: float
    fit1: FitResult
    fit2: FitResult


def estimate_constants(
    key1: Sequence[tuple[float, float, float]],
    key2: Sequence[tuple[float, float, float]],
    min_r2: float = 0.9,
) -> Constants:
    """Fit ``c1`` and ``c2`` from defect sweeps.

    Parameters
    ----------
    key1 : sequence of ``(L, t, ||d^2 - d||)``
    key2 : sequence of ``(sigma, t, ||d - e||)``

    Raises
    ------
    FitUnreliable
        If either fit has fewer than 5 points or ``R^2 < min_r2``.
    """
    if len(key1) < 5 or len(key2) < 5:
        raise FitUnreliable("each family needs at least 5 scales")
    f1 = fit_through_origin([L / t for L, t, _ in key1], [v for _, _, v in key1])
    f2 = fit_through_origin([t / s for s, t, _ in key2], [v for _, _, v in key2])
    for name, f in (("c1", f1), ("c2", f2)):
        if f.r2 < min_r2:
            raise FitUnreliable(f"{name} fit has R^2 = {f.r2:.4f} < {min_r2}")
    return Constants(f1.slope, f2.slope, f1, f2)


@dataclass(frozen=True)
class ThresholdRow:
    """One point of a vanishing sweep."""

    L: float
    threshold: float
    below: bool
    t: float
    report: PairingReport


def vanishing_experiment(
    op: GradedOperator,
    generator: Callable[[float], np.ndarray],
    q: np.ndarray,
    params: Sequence[float],
    lipschitz: Callable[[np.ndarray], float],
    c1: float,
    c2: float,
    support=None,
    crosscheck: bool = False,
) -> list[ThresholdRow]:
    """Pair at ``t0 = 4 c1 L`` along a family of generators.

    Every row with ``L < sigma / (16 c1 c2)`` is expected to give index 0
    with ``||Theta(d) - e|| < 1``.
    """
    sigma = op.sigma
    thr = sigma / (16 * c1 * c2)
    rows = []
    for lam in params:
        p = generator(lam)
        L = lipschitz(p)
        t0 = 4 * c1 * L
        if t0 <= 0:
            rep = PairingReport(0, 0.0, 0.0, sigma, 0.0, 0.0, 0.0, None, 0.0, True)
        else:
            rep = pairing(op, p, q, t0, support, crosscheck=crosscheck)
        rows.append(ThresholdRow(float(L), float(thr), bool(L < thr), float(t0), rep))
    return rows


# ---------------------------------------------------------------------------
# Main bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MainBound:
    """Both parity branches of the filling-radius bound."""

    even: Fraction
    odd: Fraction
    even_argument: Fraction
    odd_argument: Fraction
    value: Fraction
    branch: str


def main_bound(
    sigma,
    m: int,
    control: Callable,
    c1,
    c2,
    budget: LmBudget,
    manifold_dim: int = 0,
    probe: Sequence | None = None,
) -> MainBound:
    """``D(16 c1 c2 (m+1)^3 L_m / sigma)`` (even) or ``D(16 c1 c2 (m+2)^3 L_{m+1} / sigma)`` (odd).

    Arithmetic is exact: inputs are converted to :class:`fractions.Fraction`
    and ``control`` should map fractions to fractions.  The odd branch needs
    ``L_{m+1}`` in ``budget``; it is reported as ``0`` otherwise.

    Parameters
    ----------
    manifold_dim : int
        Parity selects the branch returned in ``value``.

    Raises
    ------
    BadControlFunction
        If ``control`` decreases or falls below the identity on the probe
        grid.
    """
    grid = [Fraction(x) for x in (probe or [0, Fraction(1, 2), 1, 2, 5, 10, 100, 10**6])]
    vals = [Fraction(control(x)) for x in grid]
    for (x0, v0), (x1, v1) in zip(zip(grid, vals), zip(grid[1:], vals[1:])):
        if v1 < v0:
            raise BadControlFunction(f"control decreases between {x0} and {x1}")
    for x, v in zip(grid, vals):
        if v < x:
            raise BadControlFunction(f"control({x}) = {v} is below {x}")
    s, a, b = Fraction(sigma), Fraction(c1), Fraction(c2)
    if s <= 0:
        raise ValueError("sigma must be positive")
    if len(budget.sequence) <= m:
        raise ValueError("budget does not reach L_m")
    even_arg = 16 * a * b * (m + 1) ** 3 * budget.sequence[m] / s
    even = Fraction(control(even_arg))
    if len(budget.sequence) > m + 1:
        odd_arg = 16 * a * b * (m + 2) ** 3 * budget.sequence[m + 1] / s
        odd = Fraction(control(odd_arg))
    else:
        odd_arg = odd = Fraction(0)
    branch = "even" if manifold_dim % 2 == 0 else "odd"
    if branch == "odd" and len(budget.sequence) <= m + 1:
        raise ValueError("odd branch needs L_{m+1}; build the budget to m+1")
    return MainBound(even, odd, even_arg, odd_arg, even if branch == "even" else odd, branch)
