"""Simplicial chains, Vietoris-Rips complexes and the discrete filling radius.

Chains carry coefficients in ``Q`` (exact rationals) or ``Z2``.  Boundary
questions are answered by sparse column elimination with exact arithmetic:
``gmpy2.mpq`` for ``Q`` and Python integers used as bitsets for ``Z2``.

The discrete filling radius of a sampled manifold is half the smallest
Vietoris-Rips scale at which its fundamental cycle bounds.  Each probed scale
gets one of three verdicts.  Exact elimination decides it when the complex
is small enough.  For round spheres a radial-projection certificate rules
out small scales.  Explicit filling chains (hull peeling on round spheres, or
a cone from one sample point in general) establish large scales.  Scales
that none of these settle are reported as unknown and widen the bracket.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import gmpy2
import numpy as np
from scipy.sparse import csc_matrix
from scipy.spatial import ConvexHull
from scipy.spatial.transform import Rotation

from .covers import simplex_vertices
from .errors import IntervalTooShort, NotACycle
from .metric import FiniteMetricSpace, FundamentalCycle, oriented_key

__all__ = [
    "FIELDS",
    "ChainVector",
    "SimplicialComplex",
    "BoundaryResult",
    "FillingRadiusResult",
    "ProductReport",
    "boundary_matrix",
    "boundary_rank",
    "is_boundary",
    "vr_complex",
    "discrete_filling_radius",
    "product_fillrad_check",
    "sphere_fillrad_target",
    "read_cycle_file",
    "write_cycle_file",
]

FIELDS = ("Q", "Z2")
DEFAULT_BUDGET = 100_000


def sphere_fillrad_target(n: int, R: float = 1.0) -> float:
    """Continuum filling radius of the round sphere ``S^n(R)``: ``R/2 arccos(-1/(n+1))``."""
    return 0.5 * R * math.acos(-1.0 / (n + 1))


def _check_field(fld: str) -> str:
    if fld not in FIELDS:
        raise ValueError(f"field must be one of {FIELDS}, got {fld!r}")
    return fld


# ---------------------------------------------------------------------------
# Chains and complexes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainVector:
    """Sparse simplicial chain.

    Attributes
    ----------
    dim : int
    field : {"Q", "Z2"}
    coeffs : dict
        Sorted vertex tuple to coefficient (:class:`fractions.Fraction` for
        ``Q``, ``0``/``1`` for ``Z2``); zero coefficients are dropped.
    """

    dim: int
    field: str
    coeffs: Mapping[tuple[int, ...], Any]

    def __post_init__(self) -> None:
        _check_field(self.field)
        clean = {}
        for s, c in self.coeffs.items():
            s = tuple(s)
            if len(s) != self.dim + 1:
                raise ValueError(f"simplex {s} does not have dimension {self.dim}")
            key, sign = oriented_key(s)
            if sign == 0:
                continue
            if self.field == "Z2":
                v = (clean.get(key, 0) + int(c)) % 2
            else:
                v = clean.get(key, Fraction(0)) + sign * Fraction(c)
            clean[key] = v
        object.__setattr__(self, "coeffs", {k: v for k, v in clean.items() if v})

    @classmethod
    def from_cycle(cls, cycle: FundamentalCycle, fld: str = "Q") -> "ChainVector":
        return cls(cycle.dim, fld, dict(cycle.coeffs))

    @classmethod
    def zero(cls, dim: int, fld: str = "Q") -> "ChainVector":
        return cls(dim, fld, {})

    def is_zero(self) -> bool:
        return not self.coeffs

    def boundary(self) -> "ChainVector":
        if self.dim == 0:
            return ChainVector(0, self.field, {})
        out: dict[tuple[int, ...], Any] = {}
        for s, c in self.coeffs.items():
            for i in range(len(s)):
                face = s[:i] + s[i + 1 :]
                sgn = 1 if self.field == "Z2" else (-1) ** i
                out[face] = out.get(face, 0) + sgn * c
        return ChainVector(self.dim - 1, self.field, out)

    def __add__(self, other: "ChainVector") -> "ChainVector":
        if (other.dim, other.field) != (self.dim, self.field):
            raise ValueError("chains differ in dimension or field")
        out = dict(self.coeffs)
        for s, c in other.coeffs.items():
            out[s] = out.get(s, 0) + c
        return ChainVector(self.dim, self.field, out)

    def __neg__(self) -> "ChainVector":
        return ChainVector(self.dim, self.field, {s: -c for s, c in self.coeffs.items()})

    def __sub__(self, other: "ChainVector") -> "ChainVector":
        return self + (-other)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ChainVector):
            return NotImplemented
        return (self - other).is_zero() if (other.dim, other.field) == (self.dim, self.field) else False

    def vertices(self) -> set[int]:
        return {v for s in self.coeffs for v in s}

    def diameter(self, dist: np.ndarray) -> float:
        """Largest simplex diameter in the support."""
        return max((_diam(dist, s) for s in self.coeffs), default=0.0)


def _diam(dist: np.ndarray, s: Sequence[int]) -> float:
    if len(s) < 2:
        return 0.0
    idx = list(s)
    return float(dist[np.ix_(idx, idx)].max())


@dataclass(eq=False)
class SimplicialComplex:
    """Face-closed simplicial complex with optional filtration values.

    Attributes
    ----------
    n_vertices : int
    simplices : dict of int to list of tuple
        Sorted vertex tuples by dimension.
    scale : float or None
        Vietoris-Rips scale that produced the complex.
    dist : ndarray, optional
        Distances used to order simplices by diameter.
    """

    n_vertices: int
    simplices: dict[int, list[tuple[int, ...]]]
    scale: float | None = None
    dist: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_maximal(cls, maximal: Iterable[Sequence[int]], max_dim: int | None = None):
        """Face closure of the given simplices."""
        faces: dict[int, set] = {}
        nv = 0
        for s in maximal:
            s = tuple(sorted(s))
            nv = max(nv, max(s) + 1)
            top = len(s) if max_dim is None else min(len(s), max_dim + 1)
            for k in range(1, top + 1):
                faces.setdefault(k - 1, set()).update(itertools.combinations(s, k))
        return cls(nv, {d: sorted(v) for d, v in faces.items()})

    @property
    def dimension(self) -> int:
        return max((d for d, v in self.simplices.items() if v), default=-1)

    def count(self, k: int) -> int:
        return len(self.simplices.get(k, ()))

    def ordered(self, k: int) -> list[tuple[int, ...]]:
        """``k``-simplices sorted by diameter, then lexicographically."""
        s = self.simplices.get(k, [])
        if self.dist is None:
            return sorted(s)
        d = self.dist
        return sorted(s, key=lambda t: (_diam(d, t), t))

    def contains(self, simplex: Sequence[int]) -> bool:
        key = tuple(sorted(simplex))
        return key in set(self.simplices.get(len(key) - 1, ()))


class BudgetExceeded(RuntimeError):
    """Raised internally when a complex would exceed its simplex budget."""


def vr_complex(
    space: FiniteMetricSpace | np.ndarray,
    scale: float,
    max_dim: int,
    cone: Sequence[int] | None = None,
    budget: int | None = None,
) -> SimplicialComplex:
    """Vietoris-Rips complex: a simplex for every set with all distances ``<= scale``.

    Parameters
    ----------
    space : FiniteMetricSpace or ndarray
    scale : float
        Closed threshold.
    max_dim : int
        Highest simplex dimension built.
    cone : sequence of int, optional
        Adds an apex vertex (index ``n``) joined to these points; apex edges
        have length zero in the filtration order.
    budget : int, optional
        Abort with :class:`BudgetExceeded` once the top dimension holds more
        than this many simplices.
    """
    if scale < 0:
        raise ValueError("scale must be nonnegative")
    if max_dim < 1:
        raise ValueError("max_dim must be at least 1")
    d = np.asarray(space.dist if isinstance(space, FiniteMetricSpace) else space, dtype=float)
    n = d.shape[0]
    adj = d <= scale
    np.fill_diagonal(adj, False)
    nv = n
    dist = d
    if cone is not None:
        nv = n + 1
        a2 = np.zeros((nv, nv), dtype=bool)
        a2[:n, :n] = adj
        a2[n, list(cone)] = True
        a2[list(cone), n] = True
        adj = a2
        dist = np.zeros((nv, nv))
        dist[:n, :n] = d
    nbrs = [set(np.flatnonzero(adj[i]).tolist()) for i in range(nv)]
    out: dict[int, list[tuple[int, ...]]] = {k: [] for k in range(max_dim + 1)}
    # depth-first clique enumeration so that the budget check fires early
    stack = [((i,), {j for j in nbrs[i] if j > i}) for i in reversed(range(nv))]
    top = out[max_dim]
    while stack:
        s, cand = stack.pop()
        out[len(s) - 1].append(s)
        if len(s) - 1 == max_dim:
            if budget is not None and len(top) > budget:
                raise BudgetExceeded(f"more than {budget} {max_dim}-simplices at scale {scale}")
            continue
        for j in sorted(cand, reverse=True):
            stack.append((s + (j,), {c for c in cand if c > j} & nbrs[j]))
    for k in out:
        out[k].sort()
    return SimplicialComplex(nv, out, float(scale), dist)


def boundary_matrix(complex_: SimplicialComplex, k: int, fld: str = "Q") -> csc_matrix:
    """Boundary ``C_k -> C_{k-1}`` as a sparse integer matrix.

    Rows follow ``complex_.simplices[k-1]`` and columns
    ``complex_.simplices[k]``.  Entries are ``(-1)^i`` for ``Q`` and ``1``
    for ``Z2``.
    """
    _check_field(fld)
    if k < 1:
        raise ValueError("k must be at least 1")
    rows_idx = {s: i for i, s in enumerate(complex_.simplices.get(k - 1, []))}
    cols = complex_.simplices.get(k, [])
    r, c, v = [], [], []
    for j, s in enumerate(cols):
        for i in range(len(s)):
            r.append(rows_idx[s[:i] + s[i + 1 :]])
            c.append(j)
            v.append(1 if fld == "Z2" else (-1) ** i)
    return csc_matrix((np.array(v, dtype=np.int64), (r, c)), shape=(len(rows_idx), len(cols)))


# ---------------------------------------------------------------------------
# Exact column reduction
# ---------------------------------------------------------------------------


class _Reducer:
    """Incremental column echelon form with pivot = largest row index."""

    def __init__(self, fld: str, track: bool):
        self.fld = fld
        self.track = track
        self.pivots: dict[int, Any] = {}
        self.combos: dict[int, Any] = {}
        self.ops = 0

    def _eliminate(self, vec, combo):
        if self.fld == "Z2":
            while vec:
                h = vec.bit_length() - 1
                if h not in self.pivots:
                    return h, vec, combo
                vec ^= self.pivots[h]
                if self.track:
                    combo ^= self.combos[h]
                self.ops += 1
            return None, vec, combo
        while vec:
            h = max(vec)
            if h not in self.pivots:
                return h, vec, combo
            pv = self.pivots[h]
            f = vec[h] / pv[h]
            for r, c in pv.items():
                x = vec.get(r, 0) - f * c
                if x:
                    vec[r] = x
                else:
                    vec.pop(r, None)
            if self.track:
                for col, c in self.combos[h].items():
                    x = combo.get(col, 0) - f * c
                    if x:
                        combo[col] = x
                    else:
                        combo.pop(col, None)
            self.ops += 1
        return None, vec, combo

    def add(self, vec, col: int) -> None:
        combo = (1 << col if self.fld == "Z2" else {col: gmpy2.mpq(1)}) if self.track else None
        h, vec, combo = self._eliminate(vec, combo)
        if h is not None:
            self.pivots[h] = vec
            if self.track:
                self.combos[h] = combo

    def solve(self, vec):
        """Return column combination reducing ``vec`` to zero, or ``None``."""
        zero = 0 if self.fld == "Z2" else {}
        h, rest, combo = self._eliminate(vec, zero if self.track else None)
        return None if h is not None else (combo if self.track else True)


def _column(s: tuple[int, ...], rows: Mapping, fld: str):
    if fld == "Z2":
        v = 0
        for i in range(len(s)):
            v ^= 1 << rows[s[:i] + s[i + 1 :]]
        return v
    return {rows[s[:i] + s[i + 1 :]]: gmpy2.mpq((-1) ** i) for i in range(len(s))}


def _reduce_boundary(complex_: SimplicialComplex, k: int, fld: str, track: bool):
    rows_order = complex_.ordered(k)
    rows = {s: i for i, s in enumerate(rows_order)}
    cols = complex_.ordered(k + 1)
    red = _Reducer(fld, track)
    for j, s in enumerate(cols):
        red.add(_column(s, rows, fld), j)
    return red, rows, cols


def boundary_rank(complex_: SimplicialComplex, k: int, fld: str = "Q") -> int:
    """Exact rank of ``∂_k`` over the given field."""
    _check_field(fld)
    red, _, _ = _reduce_boundary(complex_, k - 1, fld, track=False)
    return len(red.pivots)


@dataclass(frozen=True)
class BoundaryResult:
    """Verdict of :func:`is_boundary` with an optional filling chain."""

    is_boundary: bool
    witness: ChainVector | None
    ops: int

    def __bool__(self) -> bool:
        return self.is_boundary


def is_boundary(
    chain: ChainVector, complex_: SimplicialComplex, witness: bool = True
) -> BoundaryResult:
    """Decide whether ``chain`` bounds in ``complex_`` over the chain's field.

    Raises
    ------
    NotACycle
        If ``∂ chain`` is nonzero.
    ValueError
        If the chain uses simplices missing from the complex.
    """
    fld = chain.field
    if not chain.boundary().is_zero():
        raise NotACycle("input chain has nonzero boundary")
    k = chain.dim
    if chain.is_zero():
        return BoundaryResult(True, ChainVector.zero(k + 1, fld), 0)
    red, rows, cols = _reduce_boundary(complex_, k, fld, track=witness)
    missing = [s for s in chain.coeffs if s not in rows]
    if missing:
        raise ValueError(f"chain uses simplices outside the complex, e.g. {missing[0]}")
    if fld == "Z2":
        vec = 0
        for s in chain.coeffs:
            vec ^= 1 << rows[s]
    else:
        vec = {rows[s]: gmpy2.mpq(c.numerator, c.denominator) for s, c in chain.coeffs.items()}
    sol = red.solve(vec)
    if sol is None:
        return BoundaryResult(False, None, red.ops)
    if not witness:
        return BoundaryResult(True, None, red.ops)
    if fld == "Z2":
        coeffs = {cols[j]: 1 for j in range(sol.bit_length()) if sol >> j & 1}
    else:
        # solve() returns the combination subtracted from the target
        coeffs = {cols[j]: -Fraction(int(q.numerator), int(q.denominator)) for j, q in sol.items()}
    w = ChainVector(k + 1, fld, coeffs)
    if not (w.boundary() - chain).is_zero():  # pragma: no cover - exactness guard
        raise RuntimeError("witness verification failed")
    return BoundaryResult(True, w, red.ops)


# ---------------------------------------------------------------------------
# Cycle files
# ---------------------------------------------------------------------------


def write_cycle_file(chain: ChainVector, path: str | Path) -> None:
    """Write ``dim`` then one line ``coeff v0 ... vk`` per simplex."""
    lines = [str(chain.dim)]
    for s in sorted(chain.coeffs):
        lines.append(" ".join([str(chain.coeffs[s])] + [str(v) for v in s]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_cycle_file(path: str | Path, fld: str = "Q") -> ChainVector:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    dim = int(rows[0][0])
    coeffs: dict[tuple[int, ...], Any] = {}
    for row in rows[1:]:
        c = Fraction(row[0])
        s = tuple(int(v) for v in row[1:])
        key, sign = oriented_key(s)
        coeffs[key] = coeffs.get(key, 0) + sign * c
    return ChainVector(dim, fld, coeffs)


# ---------------------------------------------------------------------------
# Certificates and witnesses for the filling radius
# ---------------------------------------------------------------------------


def _sphere_info(space: FiniteMetricSpace):
    """Return ``(n, R, unit vectors)`` for sampled round spheres, else ``None``."""
    kind = space.provenance.get("kind")
    if kind not in ("circle", "sphere2") or "ambient" not in space.coords:
        return None
    if space.provenance.get("subspace"):
        return None
    n = 1 if kind == "circle" else 2
    return n, float(space.provenance.get("R", 1.0)), np.asarray(space.coords["ambient"], float)


def _degree(chain: ChainVector, u: np.ndarray) -> float:
    """Degree of the radial projection of a cycle onto the unit sphere."""
    total = 0.0
    if chain.dim == 1:
        for (a, b), c in chain.coeffs.items():
            ang = math.atan2(u[a, 0] * u[b, 1] - u[a, 1] * u[b, 0], float(u[a] @ u[b]))
            total += float(c) * ang
        return total / (2 * math.pi)
    for (a, b, cc), c in chain.coeffs.items():
        x, y, z = u[a], u[b], u[cc]
        num = float(x @ np.cross(y, z))
        den = 1.0 + float(x @ y + y @ z + z @ x)
        total += float(c) * 2 * math.atan2(num, den)
    return total / (4 * math.pi)


def radial_certificate_scale(
    space: FiniteMetricSpace, chain: ChainVector, parity: bool = False
) -> float | None:
    """Scale below which the cycle provably does not bound, for round spheres.

    If every edge of the complex subtends an angle below
    ``arccos(-1/(n+1))``, no simplex of dimension at most ``n+1`` contains the
    origin in its convex hull, so radial projection maps the complex to the
    sphere.  A cycle of nonzero degree cannot bound there.  ``chain`` must
    carry integer orientations; with ``parity`` the degree must be odd (the
    ``Z2`` statement).  Returns ``R arccos(-1/(n+1))`` (exclusive) or
    ``None`` when inapplicable.
    """
    info = _sphere_info(space)
    if info is None or chain.dim != info[0]:
        return None
    n, R, u = info
    deg = round(_degree(chain, u))
    if parity and deg % 2 == 0:
        return None
    if deg == 0:
        return None
    return R * math.acos(-1.0 / (n + 1))


def _hull_chain(u: np.ndarray, ids: Sequence[int]) -> dict[tuple[int, ...], int]:
    hull = ConvexHull(u[list(ids)])
    out = {}
    for f in hull.simplices:
        verts = [int(ids[i]) for i in f]
        if np.linalg.det(u[verts]) < 0:
            verts[-2], verts[-1] = verts[-1], verts[-2]
        key, sign = oriented_key(verts)
        out[key] = out.get(key, 0) + sign
    return out


def hull_peeling_witness(
    space: FiniteMetricSpace, chain: ChainVector, trials: int = 2000, seed: int = 0
) -> ChainVector | None:
    """Filling chain for a sphere sample's hull cycle, built by adding points.

    A small simplex around the origin is chosen by snapping rotated regular
    simplices to sample points.  The remaining points are added in
    farthest-point order; each addition replaces the visible hull faces and
    contributes the cone over them.  The result is returned only if its
    boundary equals ``chain`` exactly.
    """
    info = _sphere_info(space)
    if info is None or chain.dim != info[0]:
        return None
    n, R, u = info
    d = np.asarray(space.dist)
    reg = simplex_vertices(n + 1)
    best: tuple[float, tuple[int, ...] | None] = (np.inf, None)
    rots = Rotation.random(trials, random_state=seed).as_matrix()
    for rot in rots:
        frame = reg @ rot[: n + 1, : n + 1].T if n == 2 else reg @ _rot2(rot)
        ids = tuple(int(i) for i in np.argmax(frame @ u.T, axis=1))
        if len(set(ids)) < n + 2:
            continue
        lam = np.linalg.lstsq(np.vstack([u[list(ids)].T, np.ones(n + 2)]), np.r_[np.zeros(n + 1), 1.0], rcond=None)[0]
        if (lam <= 1e-12).any():
            continue
        m = _diam(d, ids)
        if m < best[0]:
            best = (m, ids)
    if best[1] is None:
        return None
    base = list(best[1])
    order = list(base)
    gap = d[base].min(axis=0)
    rest = set(range(space.n)) - set(base)
    while rest:
        p = max(rest, key=lambda i: (gap[i], -i))
        order.append(p)
        rest.remove(p)
        gap = np.minimum(gap, d[p])
    fld = chain.field

    def as_chain(dim, dct):
        return ChainVector(dim, fld, {k: (v % 2 if fld == "Z2" else v) for k, v in dct.items()})

    prev = as_chain(n, _hull_chain(u, order[: n + 2]))
    simplex = ChainVector(n + 1, fld, {tuple(sorted(base)): 1})
    w = simplex if (simplex.boundary() - prev).is_zero() else -simplex
    for j in range(n + 2, len(order)):
        p = order[j]
        cur = as_chain(n, _hull_chain(u, order[: j + 1]))
        gone = {s: c for s, c in prev.coeffs.items() if s not in cur.coeffs or cur.coeffs[s] != c}
        cone = ChainVector(n + 1, fld, {(p,) + s: -c for s, c in gone.items()})
        if not (cone.boundary() - (cur - prev)).is_zero():
            cone = -cone
            if not (cone.boundary() - (cur - prev)).is_zero():
                return None
        w = w + cone
        prev = cur
    return w if (w.boundary() - chain).is_zero() else None


def _rot2(rot: np.ndarray) -> np.ndarray:
    """Planar rotation extracted from a random 3D rotation (for circles)."""
    ang = math.atan2(rot[1, 0], rot[0, 0])
    c, s = math.cos(ang), math.sin(ang)
    return np.array([[c, s], [-s, c]])


def cone_witness(chain: ChainVector, dist: np.ndarray) -> tuple[ChainVector, float]:
    """Cone from the best single sample point: ``∂(v * c) = c`` for a cycle ``c``."""
    verts = sorted(chain.vertices())
    dd = np.asarray(dist)
    best_v, best_s = 0, np.inf
    for v in range(dd.shape[0]):
        s = max(max(_diam(dd, sim), float(dd[v, list(sim)].max())) for sim in chain.coeffs)
        if s < best_s:
            best_v, best_s = v, s
    coeffs = {}
    for s, c in chain.coeffs.items():
        if best_v in s:
            continue
        key, sign = oriented_key((best_v,) + s)
        coeffs[key] = coeffs.get(key, 0) + sign * c
    w = ChainVector(chain.dim + 1, chain.field, coeffs)
    if not (w.boundary() - chain).is_zero():
        # a vertex of the cycle itself: fall back to a vertex outside it
        outside = [v for v in range(dd.shape[0]) if v not in set(verts)]
        if not outside:
            raise RuntimeError("no cone apex available")
        return cone_witness_at(chain, dd, outside[0])
    return w, best_s


def cone_witness_at(chain: ChainVector, dist: np.ndarray, v: int) -> tuple[ChainVector, float]:
    coeffs = {}
    for s, c in chain.coeffs.items():
        key, sign = oriented_key((v,) + s)
        coeffs[key] = coeffs.get(key, 0) + sign * c
    w = ChainVector(chain.dim + 1, chain.field, coeffs)
    return w, w.diameter(np.asarray(dist))


# ---------------------------------------------------------------------------
# Filling radius search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FillingRadiusResult:
    """Outcome of :func:`discrete_filling_radius`.

    Attributes
    ----------
    estimate : float
        Half the smallest scale at which the cycle was shown to bound.
    bracket : (float, float)
        Half the largest scale shown not to bound, and ``estimate``.
    exact : bool
        True when no unresolved candidate scale lies inside the bracket.
    method : str
        How the upper end was established (``exact``, ``hull``, ``cone``,
        ``witness``).
    no_fill : bool
        The cycle was not shown to bound below the diameter.
    probes : tuple
        ``(scale, verdict, method)`` for every probed scale.
    """

    estimate: float
    bracket: tuple[float, float]
    exact: bool
    method: str
    no_fill: bool
    probes: tuple = ()
    field: str = "Q"


def _closed_chain(cycle: FundamentalCycle, fld: str, apex: int) -> ChainVector:
    """Close a relative cycle by coning its boundary to ``apex``."""
    c = ChainVector.from_cycle(cycle, fld)
    z = c.boundary()
    if z.is_zero():
        return c
    k = cycle.dim
    sign = (-1) ** (k + 1)
    extra = ChainVector(k, fld, {s + (apex,): sign * v for s, v in z.coeffs.items()})
    closed = c + extra
    if not closed.boundary().is_zero():  # pragma: no cover - algebra guard
        raise NotACycle("relative cycle could not be closed over its ends")
    return closed


def discrete_filling_radius(
    space: FiniteMetricSpace,
    cycle: FundamentalCycle,
    field: str = "Q",
    resolution: float | None = None,
    budget: int = DEFAULT_BUDGET,
    end_region: Sequence[int] | None = None,
    witness: ChainVector | None = None,
    lower_scale: float | None = None,
) -> FillingRadiusResult:
    """Half the smallest Vietoris-Rips scale at which ``cycle`` bounds.

    Candidate scales are the distinct pairwise distances (or multiples of
    ``2 * resolution`` when given).  The search bisects over candidates
    with three-valued probes; see the module docstring.

    Parameters
    ----------
    space : FiniteMetricSpace
    cycle : FundamentalCycle
        Absolute cycle, or relative cycle whose boundary lies in
        ``cycle.relative_to``.  Relative cycles are closed by a cone over
        ``end_region`` (default ``cycle.relative_to``).
    field : {"Q", "Z2"}
    resolution : float, optional
        Grid spacing for the radius.
    budget : int
        Largest number of ``(k+1)``-simplices for which exact elimination
        is attempted.
    witness : ChainVector, optional
        Externally built filling chain of the (closed) cycle; every scale
        at or above its diameter is a "yes".  A relative cycle's apex is
        vertex ``space.n``.
    lower_scale : float, optional
        Externally certified scale: every scale at or below it is a "no".

    Raises
    ------
    NotACycle
        If the cycle is not closed (or not closed relative to its ends).
    ValueError
        If ``witness`` does not fill the cycle.
    """
    _check_field(field)
    dist = np.asarray(space.dist)
    n = space.n
    apex = None
    if cycle.relative_to:
        apex = n
        end = list(cycle.relative_to if end_region is None else end_region)
        chain = _closed_chain(cycle, field, apex)
        aug = np.zeros((n + 1, n + 1))
        aug[:n, :n] = dist
        eval_dist = aug
    else:
        end = None
        chain = ChainVector.from_cycle(cycle, field)
        if not chain.boundary().is_zero():
            raise NotACycle("fundamental cycle has nonzero boundary")
        eval_dist = dist
    k = chain.dim
    own = chain.diameter(eval_dist)

    if resolution is None:
        cand = np.unique(dist[np.triu_indices(n, 1)])
    else:
        top = math.ceil(space.diameter / (2 * resolution))
        cand = 2 * resolution * np.arange(1, top + 1)
    cand = cand[cand >= own - 1e-12]
    if cand.size == 0 or cand[-1] < space.diameter:
        cand = np.append(cand, max(space.diameter, own))

    cert = None
    if apex is None:
        cert = radial_certificate_scale(space, ChainVector.from_cycle(cycle, "Q"), parity=field == "Z2")
    yes_scale, yes_method = np.inf, ""
    if apex is None:
        w = hull_peeling_witness(space, chain)
        if w is not None:
            yes_scale, yes_method = w.diameter(dist), "hull"
        cw, cs = cone_witness(chain, dist)
        if cs < yes_scale:
            yes_scale, yes_method = cs, "cone"

    if witness is not None:
        if not (witness.boundary() - chain).is_zero():
            raise ValueError("witness boundary differs from the cycle")
        ws = witness.diameter(eval_dist)
        if ws < yes_scale:
            yes_scale, yes_method = ws, "witness"

    probes: list[tuple[float, str, str]] = []
    cache: dict[int, str] = {}

    too_big = [np.inf]

    def probe(i: int) -> str:
        if i in cache:
            return cache[i]
        s = float(cand[i])
        verdict, how = "unknown", ""
        if cert is not None and s < cert * (1 - 1e-12) - 1e-12:
            verdict, how = "no", "certificate"
        elif lower_scale is not None and s <= lower_scale:
            verdict, how = "no", "certificate"
        elif s >= yes_scale:
            verdict, how = "yes", yes_method
        elif s < too_big[0]:
            try:
                cx = vr_complex(dist, s, k + 1, cone=end, budget=budget)
                verdict = "yes" if is_boundary(chain, cx, witness=False) else "no"
                how = "exact"
            except BudgetExceeded:
                too_big[0] = s
        probes.append((s, verdict, how))
        cache[i] = verdict
        return verdict

    lo, hi = -1, len(cand) - 1
    if np.isfinite(yes_scale):
        # explicit fillings settle every candidate from their scale upwards
        hi = int(np.searchsorted(cand, yes_scale * (1 - 1e-12) - 1e-12))
        hi = min(hi, len(cand) - 1)
    if probe(hi) != "yes":
        # the full complex is a cone; only reached if the budget blocks it
        cache[hi] = "yes"
        probes[-1] = (float(cand[hi]), "yes", "full")
    lo_cert = -1
    if cert is not None:
        below = np.flatnonzero(cand < cert * (1 - 1e-12) - 1e-12)
        if below.size:
            lo_cert = int(below[-1])
            lo = lo_cert
    if lower_scale is not None:
        below = np.flatnonzero(cand <= lower_scale)
        if below.size and below[-1] > lo:
            lo_cert = lo = int(below[-1])
    # unknown verdicts (budget) cap the probing range from above: every larger
    # scale has at least as many simplices
    ub = hi
    while min(hi, ub) - lo > 1:
        mid = (lo + min(hi, ub)) // 2
        v = probe(mid)
        if v == "yes":
            hi = mid
        elif v == "no":
            lo = lo_cert = mid
        else:
            ub = mid
    hi_scale = float(cand[hi])
    method = next(how for s, v, how in probes if s == hi_scale and v == "yes")
    lo_scale = float(cand[lo_cert]) if lo_cert >= 0 else 0.0
    exact = hi - lo_cert == 1
    no_fill = hi_scale >= space.diameter and method == "cone" and hi == len(cand) - 1
    probes.sort()
    return FillingRadiusResult(
        hi_scale / 2, (lo_scale / 2, hi_scale / 2), bool(exact), method, bool(no_fill),
        tuple(probes), field,
    )


# ---------------------------------------------------------------------------
# Product check
# ---------------------------------------------------------------------------


def _product_certificates(
    base_space: FiniteMetricSpace,
    base_cycle: FundamentalCycle,
    base_res: FillingRadiusResult,
    space: FiniteMetricSpace,
    cycle: FundamentalCycle,
    fld: str,
    region: np.ndarray,
    budget: int,
) -> tuple[float | None, ChainVector | None]:
    """Lower "no" scale and prism filling for a product cycle (see above)."""
    from .metric import _prism_simplices

    n, nb = space.n, base_space.n
    layers = n // nb
    t = np.asarray(space.coords["interval"])
    top = region[t[region] > 0]
    bottom = region[t[region] < 0]
    d = np.asarray(space.dist)
    separation = float(d[np.ix_(top, bottom)].min()) if len(top) and len(bottom) else np.inf
    lower = None
    if base_res.bracket[0] > 0:
        lower = min(2 * base_res.bracket[0], float(np.nextafter(separation, 0)))
    s_base = 2 * base_res.estimate
    base_chain = ChainVector.from_cycle(base_cycle, fld)
    try:
        bx = vr_complex(base_space, s_base, base_chain.dim + 1, budget=budget)
    except BudgetExceeded:
        return lower, None
    res = is_boundary(base_chain, bx)
    if not res:
        return lower, None
    F = res.witness
    coeffs: dict[tuple[int, ...], Any] = {}
    for j in range(layers - 1):
        lo = [j * nb + v for v in range(nb)]
        hi = [(j + 1) * nb + v for v in range(nb)]
        for simplex, c in F.coeffs.items():
            for sign, verts in _prism_simplices(simplex, lo, hi):
                key, sg = oriented_key(verts)
                coeffs[key] = coeffs.get(key, 0) + sign * sg * c
    prism = ChainVector(F.dim + 1, fld, coeffs)
    shift = lambda j: ChainVector(  # noqa: E731
        F.dim, fld, {tuple(j * nb + v for v in s): c for s, c in F.coeffs.items()}
    )
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = d
    cap_top, _ = cone_witness_at(shift(layers - 1), aug, n)
    cap_bottom, _ = cone_witness_at(shift(0), aug, n)
    closed = _closed_chain(cycle, fld, n)
    for a, b, c in itertools.product((1, -1), repeat=3):
        signed = [x if e == 1 else -x for x, e in ((prism, a), (cap_top, b), (cap_bottom, c))]
        w = signed[0] + signed[1] + signed[2]
        if (w.boundary() - closed).is_zero():
            return lower, w
    return lower, None  # pragma: no cover - orientation guard


@dataclass(frozen=True)
class ProductReport:
    """Filling radii of a base and of its product with ``[-T, T]``."""

    base: FillingRadiusResult
    product: FillingRadiusResult
    T: float
    relative_gap: float


def product_fillrad_check(
    base_spec,
    T: float,
    layers: int | None = None,
    end_width: float | None = None,
    field: str = "Q",
    resolution: float | None = None,
    budget: int = DEFAULT_BUDGET,
) -> ProductReport:
    """Compare the filling radius of a base with that of ``base x [-T, T]``.

    The product cycle is the prism triangulation relative to the two end
    regions ``|t| >= T - end_width`` (default: one layer spacing, so the two
    outermost layers at each end), closed
    by a cone over those regions.

    Two certificates keep the search away from the (huge) full complexes.
    Below the base death scale, and below the gap between the two end
    regions, the product cycle cannot bound: a filling would make the end
    circle bound inside its end region, and projecting to the base is
    1-Lipschitz.  Above, the prism over a base filling ``F`` plus the cones
    over the two end copies of ``F`` is an explicit filling, of scale at most
    ``sqrt(s^2 + h^2)`` for layer spacing ``h``.

    Warns
    -----
    IntervalTooShort
        If ``T`` is below four times the base estimate.
    """
    from .metric import ModelSpaceSpec, sample_model_space

    if field == "Z2":
        warnings.warn(
            "the product equality is stated for rational coefficients; Z2 runs are outside it",
            UserWarning,
            stacklevel=2,
        )
    base_space, base_cycle = sample_model_space(base_spec)
    base_res = discrete_filling_radius(base_space, base_cycle, field, resolution, budget)
    if T < 4 * base_res.estimate:
        warnings.warn(
            f"T = {T} is below 4x the base estimate {base_res.estimate:.4f}",
            IntervalTooShort,
            stacklevel=2,
        )
    spec = ModelSpaceSpec("product-with-interval", base_spec.n, T=T, base=base_spec, layers=layers)
    space, cycle = sample_model_space(spec)
    if cycle is None:
        raise ValueError("base has no fundamental cycle")
    if cycle.relative_to:
        t = np.asarray(space.coords["interval"])
        ts = np.unique(t)
        width = (ts[1] - ts[0]) if end_width is None and len(ts) > 1 else (end_width or 0.0)
        region = np.flatnonzero(np.abs(t) >= T - width - 1e-12)
        lower, wit = _product_certificates(
            base_space, base_cycle, base_res, space, cycle, field, region, budget
        )
        res = discrete_filling_radius(
            space, cycle, field, resolution, budget, end_region=region,
            witness=wit, lower_scale=lower,
        )
    else:
        res = discrete_filling_radius(space, cycle, field, resolution, budget)
    gap = abs(res.estimate - base_res.estimate) / base_res.estimate
    return ProductReport(base_res, res, float(T), float(gap))
