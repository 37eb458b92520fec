"""
Domain exceptions.
Part of Domain layer - error types raised by entities and numerical services.

Validation problems subclass ValueError so the presentation layer can map
them to client errors; numerical failures subclass RuntimeError.
"""


class GeometryError(ValueError):
    """Invalid geometric input."""


class ManifoldMismatchError(GeometryError):
    """Points or specs belong to different manifolds."""


class InvalidPointError(GeometryError):
    """Point data violates the manifold's validity invariants."""


class CutLocusError(GeometryError):
    """Logarithm requested for a point on the cut locus of the base point."""


class KernelConfigError(ValueError):
    """Unsupported kernel/manifold combination or invalid hyperparameters."""


class QuadratureError(RuntimeError):
    """Numerical integration did not reach the requested tolerance."""


class CholeskyError(RuntimeError):
    """Gram matrix could not be factorized even after jitter escalation."""


class OptimizationError(RuntimeError):
    """Every optimizer start failed."""


class ObjectiveError(RuntimeError):
    """Objective raised or returned a non-finite value."""
