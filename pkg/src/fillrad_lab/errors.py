"""Exception hierarchy shared by every module of the laboratory."""


class FillradLabError(Exception):
    """Base class for all domain errors raised by :mod:`fillrad_lab`."""


# metric-core
class MetricAsymmetric(FillradLabError):
    """Distance matrix differs from its transpose beyond tolerance."""


class TriangleViolation(FillradLabError):
    """Some triple violates the triangle inequality beyond tolerance."""


class NegativeDistance(FillradLabError):
    """Distance matrix has a negative entry."""


class UnsupportedModel(FillradLabError):
    """Unknown model-space kind requested from the sampler."""


class NotNonexpansive(FillradLabError):
    """A map expected to be 1-Lipschitz expands some pair of points."""


# covers-nerves
class NotAProduct(FillradLabError):
    """Strip covers need a space carrying an interval coordinate."""


class CoverageGap(FillradLabError):
    """Some point is covered by no member of the cover."""


class NotWellDefined(FillradLabError):
    """A map sends two points at distance zero to distinct images."""


class BadAnchor(FillradLabError):
    """A nerve anchor point does not belong to its cover member."""


class InfiniteDistance(FillradLabError):
    """Two nerve points lie in different connected components."""


# homology-fillrad
class NotACycle(FillradLabError):
    """A chain passed as a cycle has nonzero boundary."""


class MultiplicityTooHigh(FillradLabError):
    """Cover multiplicity exceeds the bound required for a width estimate."""


class IncompleteReport(FillradLabError):
    """An invariant report is missing a required estimate."""


class IntervalTooShort(UserWarning):
    """Interval factor is short compared with the base filling radius."""


# lipschitz-ktheory
class IncompleteBoundary(FillradLabError):
    """A boundary field is missing values on part of the boundary sample."""


class DomainMismatch(FillradLabError):
    """Pullback map lands too far from the field's domain."""


# index-pairing
class SpectralFailure(FillradLabError):
    """Eigensolver failed to converge."""


class SupportViolation(FillradLabError):
    """The difference p - q is not supported in the declared region."""


class SpectralGapLost(FillradLabError):
    """The almost-idempotent is too far from idempotent for Theta."""


class IndeterminateIndex(FillradLabError):
    """The trace of Theta is too far from an integer."""


class FluxAliased(FillradLabError):
    """Requested flux is too large for the lattice resolution."""


class FitUnreliable(FillradLabError):
    """A defect-law fit has coefficient of determination below threshold."""


class BadControlFunction(FillradLabError):
    """A diameter-control function is decreasing or below the identity."""


# cli
class ConfigError(FillradLabError):
    """Experiment configuration does not satisfy the schema."""
