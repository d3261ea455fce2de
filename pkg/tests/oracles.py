"""Slow, independent reference computations used to derive frozen test values.

Nothing here imports the package internals it is checking: simplices are
enumerated with ``itertools``, ranks come from plain Gaussian elimination
over :class:`fractions.Fraction` or GF(2), and integrals come from
``scipy.integrate.quad``.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
from scipy.integrate import quad


def vr_simplices(dist, scale, dim):
    n = len(dist)
    return [
        s
        for s in itertools.combinations(range(n), dim + 1)
        if all(dist[a][b] <= scale for a, b in itertools.combinations(s, 2))
    ]


def rank_q(rows):
    """Rank of a list of rows over Q by fraction Gaussian elimination."""
    m = [[Fraction(x) for x in r] for r in rows]
    rank, col = 0, 0
    ncols = len(m[0]) if m else 0
    while rank < len(m) and col < ncols:
        piv = next((i for i in range(rank, len(m)) if m[i][col] != 0), None)
        if piv is None:
            col += 1
            continue
        m[rank], m[piv] = m[piv], m[rank]
        for i in range(len(m)):
            if i != rank and m[i][col] != 0:
                f = m[i][col] / m[rank][col]
                m[i] = [a - f * b for a, b in zip(m[i], m[rank])]
        rank += 1
        col += 1
    return rank


def rank_z2(rows):
    m = [[int(x) % 2 for x in r] for r in rows]
    rank, col = 0, 0
    ncols = len(m[0]) if m else 0
    while rank < len(m) and col < ncols:
        piv = next((i for i in range(rank, len(m)) if m[i][col]), None)
        if piv is None:
            col += 1
            continue
        m[rank], m[piv] = m[piv], m[rank]
        for i in range(len(m)):
            if i != rank and m[i][col]:
                m[i] = [a ^ b for a, b in zip(m[i], m[rank])]
        rank += 1
        col += 1
    return rank


def boundary_dense(faces, cofaces):
    """Dense boundary matrix (rows = faces, columns = cofaces)."""
    idx = {f: i for i, f in enumerate(faces)}
    mat = [[0] * len(cofaces) for _ in faces]
    for j, s in enumerate(cofaces):
        for k in range(len(s)):
            mat[idx[s[:k] + s[k + 1:]]][j] = (-1) ** k
    return mat


def bounds(chain, dist, scale, dim, field="Q"):
    """Is ``chain`` (dict simplex -> coeff) a boundary in VR(scale)?"""
    faces = vr_simplices(dist, scale, dim)
    if any(s not in set(faces) for s in chain):
        return False
    cofaces = vr_simplices(dist, scale, dim + 1)
    if not cofaces:
        return all(c == 0 for c in chain.values())
    B = boundary_dense(faces, cofaces)
    vec = [chain.get(f, 0) for f in faces]
    rank = rank_q if field == "Q" else rank_z2
    cols = [list(r) for r in zip(*B)]
    return rank(cols) == rank(cols + [vec])


def circle_death_radius(n, R=1.0):
    """Half the smallest pairwise distance at which the circle cycle bounds."""
    ang = 2 * math.pi * np.arange(n) / n
    diff = np.abs(ang[:, None] - ang[None, :])
    dist = R * np.minimum(diff, 2 * math.pi - diff)
    chain = {}
    for i in range(n):
        a, b = i, (i + 1) % n
        s = (min(a, b), max(a, b))
        chain[s] = 1 if a < b else -1
    for s in sorted(set(np.round(dist[np.triu_indices(n, 1)], 12))):
        if bounds(chain, dist, s + 1e-12, 1):
            return s / 2
    return None


def r_multiplicity(dist, members, r):
    n = len(dist)
    best = 0
    for p in range(n):
        c = sum(1 for m in members if any(dist[p][x] < r for x in m))
        best = max(best, c)
    return best


def lebesgue_scan(dist, members, grid):
    """Largest grid value r with every open ball B(p, r) inside a member."""
    n = len(dist)
    ok = 0.0
    for r in grid:
        if all(any(all(x in m for x in range(n) if dist[p][x] < r) for m in members) for p in range(n)):
            ok = r
    return ok


def chi_quad(x):
    if x == 0:
        return 0.0
    f = lambda y: 2 * math.sin(y / 2) ** 2 / (y * y) if y != 0 else 0.5  # noqa: E731
    val, _ = quad(f, 0, abs(x), limit=400, epsabs=1e-13, epsrel=1e-13)
    return math.copysign(2 / math.pi * val, x)


def kernel_count(a, tol=1e-8):
    s = np.linalg.svd(np.asarray(a), compute_uv=False)
    return int((s < tol).sum())


def pair_lipschitz(values, dist):
    n = len(values)
    best = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            if dist[i][j] > 0:
                best = max(best, np.linalg.norm(values[i] - values[j], 2) / dist[i][j])
    return best
