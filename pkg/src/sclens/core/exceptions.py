"""Custom exceptions."""


class SclensException(Exception):
    """Base exception for SCLENS."""

    exit_code = 3


class ConfigurationError(SclensException):
    """Raised when a run configuration or an operation input is invalid."""

    exit_code = 2


class NumericalFailure(SclensException):
    """Raised when a computation diverges or leaves its domain of validity."""

    exit_code = 3


# Input validation


class UnsupportedDimension(ConfigurationError):
    """Raised when the dimension is outside the supported range."""
    pass


class NonPositiveDefinite(ConfigurationError):
    """Raised when a sampled metric fails the Cholesky test."""
    pass


class MetricSupportError(ConfigurationError):
    """Raised when a tabulated metric is not Euclidean outside its support."""
    pass


class GridMismatch(ConfigurationError):
    """Raised when two fields or a field and a metric live on different grids."""
    pass


class Unresolvable(ConfigurationError):
    """Raised when a wavepacket is narrower than the grid can represent."""
    pass


class PhaseGridTooCoarse(ConfigurationError):
    """Raised when a phase-space grid does not resolve the sqrt(h) scale."""
    pass


class DimensionTooLarge(ConfigurationError):
    """Raised when a dense or table-based operation is requested in too high a dimension."""
    pass


class EmptyInput(ConfigurationError):
    """Raised when a required sample set is empty."""
    pass


class TooFewSlices(ConfigurationError):
    """Raised when a time series has too few slices for the requested differences."""
    pass


class TooFewPoints(ConfigurationError):
    """Raised when a slope fit receives fewer than four points."""
    pass


class NonPositiveValue(ConfigurationError):
    """Raised when a log-log fit receives a non-positive value or parameter."""
    pass


# Numerical failures


class LeftDomain(NumericalFailure):
    """Raised when a trajectory leaves the box."""
    pass


class StepTooLarge(NumericalFailure):
    """Raised when a time step does not resolve the dynamics."""
    pass


class SolverDiverged(NumericalFailure):
    """Raised when an inner conjugate-gradient solve fails."""
    pass


class BoundaryContaminated(NumericalFailure):
    """Raised when field mass reaches the periodic boundary zone."""
    pass


class Blowup(NumericalFailure):
    """Raised when the sup norm exceeds the configured ceiling."""
    pass


class NotContracting(NumericalFailure):
    """Raised when Picard ratios exceed one for three consecutive iterations."""
    pass


class NotExited(NumericalFailure):
    """Raised when a ray has not left the curved region by the requested time."""
    pass


class InsufficientSamples(NumericalFailure):
    """Raised in strict mode when a Monte-Carlo estimate has too few hits."""
    pass


class StallDetected(NumericalFailure):
    """Raised in strict mode when profile extraction stops making progress."""
    pass
