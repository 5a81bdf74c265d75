"""Exception hierarchy for the gauge lab.

Every failure the numerical modules can signal has its own class so callers
(and the experiment runner) can tell a singular gauge orbit from a quadrature
that did not converge without parsing messages.
"""

from typing import Optional


class GaugeLabError(Exception):
    """Base class for all domain errors."""


class GaugeSingular(GaugeLabError):
    """Configuration sits on a gauge-orbit singularity (theta undefined)."""


class CoincidentParticles(GaugeLabError):
    """Two particles coincide where the pair potential is singular."""


class DegenerateInertia(GaugeLabError):
    """Sum of m R^2 (or R^2) vanishes to working precision."""


class OffSurface(GaugeLabError):
    """A configuration or momentum violates its gauge condition."""


class DegenerateJacobian(GaugeLabError):
    """Faddeev-Popov determinant vanishes at an evaluation point."""


class StepTooLarge(GaugeLabError):
    """Angle jump falls in the ambiguity band of the branch tracker."""


class StepFailure(GaugeLabError):
    """Adaptive integrator could not complete a step."""


class ChartNotTranslationInvariant(GaugeLabError):
    """Linear chart coefficients violate sum m A = 0 = sum m B."""


class DimensionMismatch(GaugeLabError):
    """Operators or arrays of incompatible dimension were combined."""


class NoEliminableCoordinate(GaugeLabError):
    """Gauge condition has no coordinate that can be solved for."""


class QuadratureNotConverged(GaugeLabError):
    """Two quadrature levels disagree by more than the requested tolerance."""


class GridTooCoarse(GaugeLabError):
    """Richardson error estimate of a grid eigenvalue exceeds tolerance."""


class NonIntegerEigenvalue(GaugeLabError):
    """Winding numbers of a linear-gauge eigenfunction must be integers."""


class CollinearDegenerate(GaugeLabError):
    """Shape with 2Q = R^2, where the orbit factor Omega vanishes."""


class FitResidualTooLarge(GaugeLabError):
    """Scaling fit does not show the expected leading behaviour."""


class DegenerateDirection(GaugeLabError):
    """Sampled deformation annihilates the leading term; resample."""


class ConfigInvalid(GaugeLabError):
    """Experiment configuration failed validation.

    Args:
        message: Human readable reason
        field: Dotted path of the offending field, if known
    """

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)
