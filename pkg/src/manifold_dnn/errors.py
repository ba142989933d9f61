"""Exception hierarchy shared across the package."""


class ManifoldDNNError(Exception):
    """Base class for all package errors."""


class SpecError(ManifoldDNNError):
    """Invalid arguments or a mismatched model/data specification."""


class ShapeError(ManifoldDNNError):
    """Array dimensions do not conform."""


class NumericError(ManifoldDNNError):
    """Non-finite values or a failed numeric subroutine."""


class GeometryError(ManifoldDNNError):
    """Input violates a manifold or tangency invariant."""


class CutLocusError(GeometryError):
    """Log map requested at or beyond the cut locus of the base point."""


class NotPositiveDefiniteError(GeometryError):
    """Matrix expected to be symmetric positive definite is not."""


class DegenerateShapeError(GeometryError):
    """Landmark configuration collapses to a single point."""


class CoverageGapError(GeometryError):
    """No chart of the atlas has positive weight at the given point."""


class ConvergenceError(ManifoldDNNError):
    """Iterative solver hit its iteration cap; carries the last iterate."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class TrainingDivergedError(ManifoldDNNError):
    """Training loss became non-finite; carries the offending epoch."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class ConfigError(ManifoldDNNError):
    """Experiment configuration failed validation."""
