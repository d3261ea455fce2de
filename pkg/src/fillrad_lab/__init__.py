"""Discrete filling radius, nerve maps and quantitative index pairings.

Submodules
----------
metric
    Finite metric spaces, model samplers and the Kuratowski embedding.
covers
    Covers, thickenings, nerves and the maps ``f_r``, ``g_r``.
homology
    Vietoris-Rips complexes, exact boundary tests and filling radii.
invariants
    Width, injectivity radius and radsphere bounds with the inequality chain.
ktheory
    Lipschitz projection and unitary fields, Bott projections, budgets.
pairing
    Difference elements, ``Theta`` and the lattice index pairing.
estimators
    Scikit-learn style wrappers.
cli
    Batch experiment runner.
"""

__version__ = "0.1.0"

from .errors import FillradLabError  # noqa: E402
from .metric import (  # noqa: E402
    FiniteMetricSpace,
    FundamentalCycle,
    ModelSpaceSpec,
    kuratowski_embed,
    sample_model_space,
    validate_metric,
)
from .homology import discrete_filling_radius, product_fillrad_check  # noqa: E402
from .estimators import (  # noqa: E402
    FillingRadiusEstimator,
    KuratowskiTransformer,
    NerveMapTransformer,
)

__all__ = [
    "__version__",
    "FillradLabError",
    "FiniteMetricSpace",
    "FundamentalCycle",
    "ModelSpaceSpec",
    "kuratowski_embed",
    "sample_model_space",
    "validate_metric",
    "discrete_filling_radius",
    "product_fillrad_check",
    "FillingRadiusEstimator",
    "KuratowskiTransformer",
    "NerveMapTransformer",
]
