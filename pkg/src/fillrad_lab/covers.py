"""Covers, thickenings, nerves and the maps between a space and its nerve.

A cover of a finite space is a list of point subsets.  Thickening by ``r``
replaces every member ``U`` by ``U^r = {x : d(x, U) < r}``.  The nerve has
one vertex per member and a simplex for every family of members with a
common point.  The map ``f_r`` sends a point to the barycentric combination
weighted by distances to member complements, and ``g_r`` sends a nerve point
back to the sup-norm space through chosen anchor points.

Two metrics on the nerve are supported: the ``l1`` simplicial metric and the
``spherical`` metric, where a maximal simplex of dimension ``n`` is realised
by the vertices of a regular simplex inscribed in the unit sphere of
``R^n``.  Distances between points of different maximal simplices are
shortest paths through a graph of sample points on the edges of the nerve.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import shortest_path

from .errors import BadAnchor, CoverageGap, NotAProduct, NotWellDefined
from .metric import FiniteMetricSpace, KuratowskiImage

__all__ = [
    "Cover",
    "ThickenedCover",
    "NerveComplex",
    "NervePoint",
    "NerveMap",
    "r_multiplicity",
    "lebesgue_number",
    "thicken_cover",
    "build_cover_strips",
    "ball_cover",
    "build_nerve",
    "nerve_distance",
    "project_to_nerve",
    "lipschitz_audit",
    "build_g_r",
    "simplex_vertices",
    "FLAVORS",
    "read_cover_file",
    "write_cover_file",
    "write_nerve_file",
]

FLAVORS = ("l1", "spherical")


# ---------------------------------------------------------------------------
# Covers
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Cover:
    """Indexed family of point subsets covering a finite space.

    Raises
    ------
    ValueError
        If a member is empty or refers to points outside the space.
    CoverageGap
        If some point lies in no member.
    """

    base: FiniteMetricSpace
    members: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        mem = tuple(np.unique(np.asarray(m, dtype=int)) for m in self.members)
        object.__setattr__(self, "members", mem)
        n = self.base.n
        for i, m in enumerate(mem):
            if m.size == 0:
                raise ValueError(f"member {i} is empty")
            if m[0] < 0 or m[-1] >= n:
                raise ValueError(f"member {i} has indices outside 0..{n - 1}")
        covered = self.mask.any(axis=0)
        if not covered.all():
            raise CoverageGap(f"points {np.flatnonzero(~covered)[:10].tolist()} are uncovered")

    @property
    def k(self) -> int:
        return len(self.members)

    @property
    def mask(self) -> np.ndarray:
        """Boolean membership matrix of shape (members, points)."""
        m = np.zeros((len(self.members), self.base.n), dtype=bool)
        for i, mem in enumerate(self.members):
            m[i, mem] = True
        return m

    @property
    def diameters(self) -> np.ndarray:
        d = np.asarray(self.base.dist)
        return np.array([d[np.ix_(m, m)].max() for m in self.members])

    @property
    def diameter(self) -> float:
        return float(self.diameters.max())

    @property
    def multiplicity(self) -> int:
        """Largest number of members sharing a point."""
        return int(self.mask.sum(axis=0).max())

    def distance_to_members(self) -> np.ndarray:
        """Matrix ``(points, members)`` of ``d(p, U_i)``."""
        d = np.asarray(self.base.dist)
        return np.stack([d[:, m].min(axis=1) for m in self.members], axis=1)

    def distance_to_complements(self) -> np.ndarray:
        """Matrix ``(points, members)`` of ``d(p, X - U_i)`` (``inf`` if empty)."""
        d = np.asarray(self.base.dist)
        mask = self.mask
        out = np.empty((self.base.n, self.k))
        for i in range(self.k):
            comp = np.flatnonzero(~mask[i])
            out[:, i] = d[:, comp].min(axis=1) if comp.size else np.inf
        return out


@dataclass(frozen=True, eq=False)
class ThickenedCover(Cover):
    """Cover ``{U_i^r}`` obtained from ``origin`` by thickening by ``r``."""

    origin: Cover | None = None
    r: float = 0.0


def r_multiplicity(cover: Cover, r: float) -> int:
    """Largest number of members met by an open ball ``B(p, r)``.

    Raises
    ------
    ValueError
        If ``r <= 0``.
    """
    if r <= 0:
        raise ValueError("r must be positive")
    return int((cover.distance_to_members() < r).sum(axis=1).max())


def lebesgue_number(cover: Cover) -> float:
    """Supremum of ``r`` such that every open ball ``B(p, r)`` lies in a member.

    On a finite sample ``B(p, r)`` lies in ``U`` exactly when
    ``r <= d(p, X - U)``, so the value is ``min_p max_U d(p, X - U)`` and is
    ``inf`` when some member is the whole space.
    """
    return float(cover.distance_to_complements().max(axis=1).min())


def thicken_cover(cover: Cover, r: float) -> ThickenedCover:
    """Replace every member ``U`` by ``{x : d(x, U) < r}``.

    The diameter growth bound ``2r`` and the Lebesgue bound ``>= r`` are
    checked on the result.

    Raises
    ------
    ValueError
        If ``r <= 0``.
    RuntimeError
        If one of the two guaranteed bounds fails (indicates an invalid
        metric).
    """
    if r <= 0:
        raise ValueError("r must be positive")
    near = cover.distance_to_members() < r
    members = tuple(np.flatnonzero(near[:, i]) for i in range(cover.k))
    thick = ThickenedCover(cover.base, members, origin=cover, r=float(r))
    growth = thick.diameters - cover.diameters
    if growth.max() > 2 * r + 1e-9:
        raise RuntimeError(f"member diameter grew by {growth.max()} > 2r")
    if lebesgue_number(thick) < r - 1e-9:
        raise RuntimeError("thickened cover has Lebesgue number below r")
    return thick


def build_cover_strips(space: FiniteMetricSpace, R: float, r: float | None = None) -> Cover:
    """Two interleaved families of strips along the interval coordinate.

    Core strips ``[t0 + 2Rj, t0 + 2R(j+1)]`` are widened by ``R/2`` on each
    side.  Strips with even ``j`` form one family and odd ``j`` the other;
    strips of one family are ``R`` apart, so every ball of radius ``r < R/2``
    meets at most two members.

    Parameters
    ----------
    space : FiniteMetricSpace
        Must carry ``coords["interval"]`` (segments and products).
    R : float
        Strip period is ``2R``.
    r : float, optional
        If given (``0 < r < R/2``), the bound ``r_multiplicity <= 2`` is
        checked.

    Raises
    ------
    NotAProduct
        If the space has no interval coordinate.
    """
    if "interval" not in space.coords:
        raise NotAProduct("space carries no interval coordinate")
    if R <= 0:
        raise ValueError("R must be positive")
    t = np.asarray(space.coords["interval"], dtype=float)
    t0, t1 = float(t.min()), float(t.max())
    n_core = max(1, math.ceil((t1 - t0) / (2 * R) - 1e-12))
    members = []
    for j in range(n_core):
        lo, hi = t0 + 2 * R * j - R / 2, t0 + 2 * R * (j + 1) + R / 2
        idx = np.flatnonzero((t >= lo - 1e-12) & (t <= hi + 1e-12))
        if idx.size:
            members.append(idx)
    cover = Cover(space, tuple(members))
    if r is not None:
        if not 0 < r < R / 2:
            raise ValueError("the multiplicity check needs 0 < r < R/2")
        mult = r_multiplicity(cover, r)
        if mult > 2:
            raise RuntimeError(f"strip cover has r-multiplicity {mult} > 2")
    return cover


def farthest_point_sample(space: FiniteMetricSpace, radius: float, seed: int = 0) -> np.ndarray:
    """Greedy farthest-point centres until every point is within ``radius``."""
    d = np.asarray(space.dist)
    rng = np.random.default_rng(seed)
    centres = [int(rng.integers(space.n))]
    gap = d[centres[0]].copy()
    while gap.max() > radius:
        c = int(np.argmax(gap))
        centres.append(c)
        gap = np.minimum(gap, d[c])
    return np.array(centres)


def ball_cover(space: FiniteMetricSpace, radius: float, seed: int = 0) -> Cover:
    """Closed balls of ``radius`` around farthest-point-sampled centres."""
    d = np.asarray(space.dist)
    centres = farthest_point_sample(space, radius, seed)
    return Cover(space, tuple(np.flatnonzero(d[c] <= radius) for c in centres))


def read_cover_file(space: FiniteMetricSpace, path: str | Path) -> Cover:
    """Read a cover: member count, then one line of point indices per member."""
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    k = int(rows[0][0])
    if len(rows) - 1 != k:
        raise ValueError(f"expected {k} members, found {len(rows) - 1}")
    return Cover(space, tuple(np.array([int(x) for x in row]) for row in rows[1:]))


def write_cover_file(cover: Cover, path: str | Path) -> None:
    lines = [str(cover.k)] + [" ".join(map(str, m.tolist())) for m in cover.members]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Nerves
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def simplex_vertices(n: int) -> np.ndarray:
    """Vertices ``v_n^0..v_n^n`` of the regular simplex inscribed in ``S^{n-1}``.

    Built by the recursion ``v_1 = (1, -1)``, ``v_n^n = e_n`` and
    ``v_n^j = sqrt(1 - 1/n^2) v_{n-1}^j (+) (-1/n)``.  Row ``j`` is ``v_n^j``.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return np.zeros((1, 0))
    v = np.array([[1.0], [-1.0]])
    for m in range(2, n + 1):
        top = np.hstack([math.sqrt(1 - 1 / m**2) * v, np.full((m, 1), -1 / m)])
        v = np.vstack([top, np.eye(1, m, m - 1)])
    v.setflags(write=False)
    return v


@dataclass(frozen=True)
class NervePoint:
    """Point of a nerve: barycentric weights on the vertices of a simplex.

    Raises
    ------
    ValueError
        If weights are negative or do not sum to one (within ``1e-12``).
    """

    simplex: tuple[int, ...]
    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.simplex) != len(self.weights) or not self.simplex:
            raise ValueError("simplex and weights must have equal nonzero length")
        w = np.asarray(self.weights)
        if (w < -1e-15).any() or abs(w.sum() - 1) > 1e-12:
            raise ValueError("barycentric weights must be nonnegative and sum to 1")

    @classmethod
    def from_dense(cls, w: np.ndarray) -> "NervePoint":
        idx = np.flatnonzero(w > 0)
        vals = w[idx] / w[idx].sum()
        return cls(tuple(int(i) for i in idx), tuple(float(x) for x in vals))

    @classmethod
    def vertex(cls, i: int) -> "NervePoint":
        return cls((i,), (1.0,))

    def dense(self, k: int) -> np.ndarray:
        out = np.zeros(k)
        out[list(self.simplex)] = self.weights
        return out


@dataclass(eq=False)
class NerveComplex:
    """Nerve of a cover with a chosen metric flavor and anchor points.

    Attributes
    ----------
    cover : Cover
        The (thickened) cover whose members are the vertices.
    simplices : frozenset of tuple
        All simplices, as sorted vertex tuples.
    maximal : tuple of tuple
        Maximal simplices.
    flavor : {"l1", "spherical"}
    anchors : ndarray of int
        Point index ``p_U`` chosen in each member.
    edge_samples : int
        Subdivision points per edge in the cross-simplex path graph.
    """

    cover: Cover
    simplices: frozenset
    maximal: tuple
    flavor: str
    anchors: np.ndarray
    edge_samples: int = 8
    _graph: tuple | None = field(default=None, repr=False)

    @property
    def dimension(self) -> int:
        return max(len(s) for s in self.maximal) - 1

    def skeleton(self, k: int) -> list[tuple[int, ...]]:
        return sorted(s for s in self.simplices if len(s) == k + 1)

    def components(self) -> np.ndarray:
        """Connected-component label of every vertex."""
        from scipy.sparse.csgraph import connected_components

        k = self.cover.k
        edges = self.skeleton(1)
        rows = [a for a, b in edges]
        cols = [b for a, b in edges]
        g = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(k, k))
        return connected_components(g, directed=False)[1]

    # -- geometry inside one maximal simplex --------------------------------
    def local_distance(self, top: tuple[int, ...], a: np.ndarray, b: np.ndarray) -> float:
        """Distance between dense barycentric vectors inside the simplex ``top``."""
        diff = (a - b)[list(top)]
        if self.flavor == "l1":
            return float(np.abs(diff).sum())
        return float(np.linalg.norm(diff @ simplex_vertices(len(top) - 1)))

    def carriers(self, w: np.ndarray) -> list[tuple[int, ...]]:
        supp = set(np.flatnonzero(w > 0).tolist())
        return [m for m in self.maximal if supp <= set(m)]

    # -- path graph ---------------------------------------------------------
    def _build_graph(self):
        k = self.cover.k
        nodes: list[np.ndarray] = [np.eye(k)[i] for i in range(k)]
        for a, b in self.skeleton(1):
            for s in range(1, self.edge_samples):
                w = np.zeros(k)
                w[a], w[b] = 1 - s / self.edge_samples, s / self.edge_samples
                nodes.append(w)
        nodes_arr = np.array(nodes)
        supp = nodes_arr > 0
        rows, cols, vals = [], [], []
        by_top = {}
        for top in self.maximal:
            inside = np.flatnonzero(~supp[:, [v for v in range(k) if v not in top]].any(axis=1))
            by_top[top] = inside
            sub = nodes_arr[inside][:, list(top)]
            if self.flavor == "l1":
                dd = np.abs(sub[:, None, :] - sub[None, :, :]).sum(axis=2)
            else:
                emb = sub @ simplex_vertices(len(top) - 1)
                dd = np.linalg.norm(emb[:, None, :] - emb[None, :, :], axis=2)
            ii, jj = np.triu_indices(len(inside), 1)
            rows += inside[ii].tolist()
            cols += inside[jj].tolist()
            vals += dd[ii, jj].tolist()
        # an edge lying in several maximal simplices keeps its shortest length
        best: dict[tuple[int, int], float] = {}
        for key, val in zip(zip(rows, cols), vals):
            best[key] = min(val, best.get(key, np.inf))
        nn = len(nodes_arr)
        keys = np.array(list(best.keys()), dtype=int).reshape(-1, 2)
        weights = np.maximum(np.array(list(best.values())), 1e-300)
        g = coo_matrix((weights, (keys[:, 0], keys[:, 1])), shape=(nn, nn)).tocsr()
        apsp = shortest_path(g, directed=False)
        self._graph = (nodes_arr, by_top, apsp)
        return self._graph

    def distance(self, a: NervePoint | np.ndarray, b: NervePoint | np.ndarray) -> float:
        """Nerve distance; ``inf`` between different components.

        Points sharing a maximal simplex use the local metric there (the
        smallest value over shared maximal simplices); otherwise the path
        passes through edge sample points.
        """
        k = self.cover.k
        wa = a.dense(k) if isinstance(a, NervePoint) else np.asarray(a, float)
        wb = b.dense(k) if isinstance(b, NervePoint) else np.asarray(b, float)
        if np.array_equal(wa, wb):
            return 0.0
        ca, cb = self.carriers(wa), self.carriers(wb)
        shared = [t for t in ca if t in cb]
        best = min((self.local_distance(t, wa, wb) for t in shared), default=np.inf)
        nodes, by_top, apsp = self._graph or self._build_graph()

        def reach(w, tops):
            dist = np.full(len(nodes), np.inf)
            for t in tops:
                ids = by_top[t]
                sub = nodes[ids]
                if self.flavor == "l1":
                    dd = np.abs(sub[:, list(t)] - w[list(t)]).sum(axis=1)
                else:
                    emb = (sub[:, list(t)] - w[list(t)]) @ simplex_vertices(len(t) - 1)
                    dd = np.linalg.norm(emb, axis=1)
                dist[ids] = np.minimum(dist[ids], dd)
            return dist

        ra, rb = reach(wa, ca), reach(wb, cb)
        ia, ib = np.flatnonzero(np.isfinite(ra)), np.flatnonzero(np.isfinite(rb))
        via = (ra[ia][:, None] + apsp[np.ix_(ia, ib)] + rb[ib][None, :]).min()
        return float(min(best, via))


def build_nerve(
    cover: Cover,
    flavor: str = "l1",
    anchors: Sequence[int] | None = None,
    edge_samples: int = 8,
) -> NerveComplex:
    """Nerve of ``cover``: every family of members with a common point.

    Parameters
    ----------
    cover : Cover
        Usually a :class:`ThickenedCover`.
    flavor : {"l1", "spherical"}
    anchors : sequence of int, optional
        One point per member; defaults to each member's metric median
        (the member point minimising the largest distance to the member).
    edge_samples : int
        Subdivisions per edge used for cross-simplex paths.

    Raises
    ------
    BadAnchor
        If an anchor does not belong to its member.
    """
    if flavor not in FLAVORS:
        raise ValueError(f"flavor must be one of {FLAVORS}")
    mask = cover.mask
    point_sets = {tuple(np.flatnonzero(mask[:, p]).tolist()) for p in range(cover.base.n)}
    maximal = sorted(s for s in point_sets if not any(set(s) < set(t) for t in point_sets))
    simplices = set()
    for s in maximal:
        for k in range(1, len(s) + 1):
            simplices.update(itertools.combinations(s, k))
    d = np.asarray(cover.base.dist)
    if anchors is None:
        anchors = [int(m[np.argmin(d[np.ix_(m, m)].max(axis=1))]) for m in cover.members]
    anchors = np.asarray(anchors, dtype=int)
    if len(anchors) != cover.k:
        raise ValueError("need one anchor per member")
    for i, p in enumerate(anchors):
        if not mask[i, p]:
            raise BadAnchor(f"anchor {p} is not in member {i}")
    return NerveComplex(
        cover, frozenset(simplices), tuple(tuple(s) for s in maximal), flavor, anchors, edge_samples
    )


def nerve_distance(nerve: NerveComplex, a: NervePoint, b: NervePoint) -> float:
    """Distance between two nerve points (``inf`` across components)."""
    return nerve.distance(a, b)


def write_nerve_file(nerve: NerveComplex, path: str | Path) -> None:
    """Export the maximal simplices, one per line."""
    Path(path).write_text("\n".join(" ".join(map(str, s)) for s in nerve.maximal) + "\n")


# ---------------------------------------------------------------------------
# f_r and g_r
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class NerveMap:
    """The map ``f_r``: barycentric weights of every sample point.

    Attributes
    ----------
    nerve : NerveComplex
    weights : ndarray of shape (points, members)
    """

    nerve: NerveComplex
    weights: np.ndarray

    def __call__(self, i: int) -> NervePoint:
        return NervePoint.from_dense(self.weights[i])

    def pairwise_distances(self) -> np.ndarray:
        n = self.weights.shape[0]
        out = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                out[i, j] = out[j, i] = self.nerve.distance(self.weights[i], self.weights[j])
        return out

    @property
    def lipschitz_bound(self) -> float:
        """``(m+1)^2/r`` for l1 and ``(m+1)^3/r`` for the spherical flavor."""
        cover = self.nerve.cover
        r = getattr(cover, "r", 0.0)
        if r <= 0:
            return np.inf
        mult = cover.multiplicity
        return mult**2 / r if self.nerve.flavor == "l1" else mult**3 / r


def project_to_nerve(
    space: FiniteMetricSpace, cover: Cover, nerve: NerveComplex
) -> NerveMap:
    """Evaluate ``f_r(x) = sum_i d(x, X - U_i) U_i / sum_i d(x, X - U_i)``.

    Members equal to the whole space have empty complement; when present,
    a point is sent to the barycentre of those members.

    Raises
    ------
    CoverageGap
        If some point has all weights zero.
    """
    if cover.base is not space and cover.base.n != space.n:
        raise ValueError("cover and space differ")
    w = cover.distance_to_complements()
    full = np.isinf(w)
    if full.any():
        w = np.where(full.any(axis=1, keepdims=True), full.astype(float), w)
    tot = w.sum(axis=1)
    if (tot <= 0).any():
        raise CoverageGap(f"points {np.flatnonzero(tot <= 0)[:10].tolist()} map nowhere")
    return NerveMap(nerve, w / tot[:, None])


def lipschitz_audit(
    space: FiniteMetricSpace,
    out: np.ndarray | NerveMap | Callable[[int, int], float],
    tol: float = 1e-12,
) -> float:
    """Largest ratio ``d_out(f(x), f(y)) / d(x, y)`` over all pairs.

    Parameters
    ----------
    space : FiniteMetricSpace
        Domain.
    out : ndarray, NerveMap or callable
        Either the full matrix of output distances, a :class:`NerveMap`, or
        a function of two point indices.

    Raises
    ------
    NotWellDefined
        If two points at distance zero have different images.
    """
    d = np.asarray(space.dist)
    if isinstance(out, NerveMap):
        od = out.pairwise_distances()
    elif callable(out):
        n = space.n
        od = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                od[i, j] = od[j, i] = out(i, j)
    else:
        od = np.asarray(out, dtype=float)
    iu = np.triu_indices(space.n, 1)
    dd, oo = d[iu], od[iu]
    zero = dd <= 0
    if (oo[zero] > tol).any():
        raise NotWellDefined("points at distance zero have distinct images")
    if (~zero).sum() == 0:
        return 0.0
    return float((oo[~zero] / dd[~zero]).max())


@dataclass(eq=False)
class GMap:
    """The map ``g_r``: affine on simplices, anchors sent to ``Psi(p_U)``."""

    nerve: NerveComplex
    image: KuratowskiImage

    @property
    def D(self) -> float:
        """Largest member diameter of the cover (the round-trip bound)."""
        return self.nerve.cover.diameter

    def __call__(self, y: NervePoint | np.ndarray) -> np.ndarray:
        k = self.nerve.cover.k
        w = y.dense(k) if isinstance(y, NervePoint) else np.asarray(y, float)
        return w @ self.image.coords[self.nerve.anchors]

    def round_trip(self, fmap: NerveMap) -> np.ndarray:
        """Sup-norm displacement ``|g_r(f_r(p)) - Psi(p)|`` for every point."""
        back = fmap.weights @ self.image.coords[self.nerve.anchors]
        return np.abs(back - self.image.coords).max(axis=1)


def build_g_r(nerve: NerveComplex, image: KuratowskiImage) -> GMap:
    """Build ``g_r`` from the nerve anchors and a Kuratowski image.

    Raises
    ------
    BadAnchor
        If an anchor is not in its member.
    """
    mask = nerve.cover.mask
    for i, p in enumerate(nerve.anchors):
        if not mask[i, p]:
            raise BadAnchor(f"anchor {p} is not in member {i}")
    if image.base.n != nerve.cover.base.n:
        raise ValueError("image and nerve live on different spaces")
    return GMap(nerve, image)
