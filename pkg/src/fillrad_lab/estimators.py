"""Scikit-learn style wrappers around the metric and homology routines.

Inputs are :class:`~fillrad_lab.metric.FiniteMetricSpace` objects or square
distance matrices.  Hyperparameters are constructor arguments, so
``get_params`` / ``set_params`` / ``clone`` behave as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .covers import (
    ball_cover,
    build_cover_strips,
    build_g_r,
    build_nerve,
    lipschitz_audit,
    project_to_nerve,
    thicken_cover,
)
from .homology import DEFAULT_BUDGET, discrete_filling_radius
from .metric import FiniteMetricSpace, FundamentalCycle, kuratowski_embed, validate_metric

__all__ = ["KuratowskiTransformer", "NerveMapTransformer", "FillingRadiusEstimator"]


def _as_space(X) -> FiniteMetricSpace:
    if isinstance(X, FiniteMetricSpace):
        return X
    return validate_metric(np.asarray(X, dtype=float))


class KuratowskiTransformer(BaseEstimator, TransformerMixin):
    """Isometric embedding ``x -> d(x, .) - d(x0, .)`` into sup-norm space.

    Parameters
    ----------
    basepoint : int
        Index of ``x0``.
    """

    def __init__(self, basepoint: int = 0):
        self.basepoint = basepoint

    def fit(self, X, y=None):
        space = _as_space(X)
        self.image_ = kuratowski_embed(space, self.basepoint)
        self.isometry_defect_ = self.image_.isometry_defect()
        return self

    def transform(self, X=None):
        check_is_fitted(self, "image_")
        return np.array(self.image_.coords)


class NerveMapTransformer(BaseEstimator, TransformerMixin):
    """Cover, thicken and project a space onto the nerve of the cover.

    Parameters
    ----------
    cover : {"strips", "balls"}
        Strip covers need an interval coordinate; ball covers use farthest
        point sampling with radius ``R``.
    R : float
        Strip half-period or ball radius.
    r : float
        Thickening radius.
    flavor : {"l1", "spherical"}
    seed : int
    edge_samples : int
        Sample points per nerve edge for cross-simplex distances.

    Attributes
    ----------
    cover_ : ThickenedCover
    nerve_ : NerveComplex
    map_ : NerveMap
    lipschitz_ : float
        Audited Lipschitz constant of ``f_r``.
    bound_ : float
        Guaranteed bound for the flavor.
    """

    def __init__(self, cover="balls", R=1.0, r=0.25, flavor="l1", seed=0, edge_samples=8):
        self.cover = cover
        self.R = R
        self.r = r
        self.flavor = flavor
        self.seed = seed
        self.edge_samples = edge_samples

    def fit(self, X, y=None):
        space = _as_space(X)
        if self.cover == "strips":
            base = build_cover_strips(space, self.R, self.r)
        elif self.cover == "balls":
            base = ball_cover(space, self.R, self.seed)
        else:
            raise ValueError(f"unknown cover kind {self.cover!r}")
        self.space_ = space
        self.cover_ = thicken_cover(base, self.r)
        self.nerve_ = build_nerve(self.cover_, self.flavor, edge_samples=self.edge_samples)
        self.map_ = project_to_nerve(space, self.cover_, self.nerve_)
        self.lipschitz_ = lipschitz_audit(space, self.map_)
        self.bound_ = self.map_.lipschitz_bound
        return self

    def transform(self, X=None):
        """Barycentric weights ``(n_points, n_members)`` of ``f_r``."""
        check_is_fitted(self, "map_")
        return np.array(self.map_.weights)

    def round_trip(self) -> np.ndarray:
        """Sup-norm displacement of ``g_r f_r`` at every sample point."""
        check_is_fitted(self, "map_")
        g = build_g_r(self.nerve_, kuratowski_embed(self.space_))
        return g.round_trip(self.map_)


class FillingRadiusEstimator(BaseEstimator):
    """Discrete filling radius of a fundamental cycle.

    ``fit(X, cycle)`` runs the search; ``predict()`` returns the estimate.

    Parameters
    ----------
    field : {"Q", "Z2"}
    resolution : float, optional
    budget : int

    Attributes
    ----------
    result_ : FillingRadiusResult
    estimate_ : float
    bracket_ : tuple of float
    """

    def __init__(self, field="Q", resolution=None, budget=DEFAULT_BUDGET):
        self.field = field
        self.resolution = resolution
        self.budget = budget

    def fit(self, X, y: FundamentalCycle):
        if y is None:
            raise ValueError("a fundamental cycle is required")
        space = _as_space(X)
        self.result_ = discrete_filling_radius(
            space, y, self.field, self.resolution, self.budget
        )
        self.estimate_ = self.result_.estimate
        self.bracket_ = self.result_.bracket
        return self

    def predict(self, X=None) -> float:
        check_is_fitted(self, "result_")
        return self.estimate_
