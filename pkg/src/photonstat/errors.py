"""Exception hierarchy shared by all photonstat modules.

The CLI maps these onto stable exit codes: validation problems exit with 2,
convergence/solvability problems with 3, I/O problems with 4.
"""


class PhotonStatError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(PhotonStatError, ValueError):
    """Invalid parameters or input data."""


class CapacityError(ValidationError):
    """Expected event count exceeds the configured memory budget."""


class UndefinedMean(ValidationError):
    """A Mandel parameter was requested for data with zero mean count."""


class InsufficientData(ValidationError):
    """Not enough samples to evaluate the requested estimator."""


class ConvergenceError(PhotonStatError):
    """Base class for iterative procedures that failed to converge."""


class NonConvergence(ConvergenceError):
    """Iteration cap reached without meeting the convergence criterion."""


class AmbiguousClock(ConvergenceError):
    """Photocount density too low to identify the pulse-clock saw teeth."""


class NoSolution(ConvergenceError):
    """The requested inversion has no solution in the model's reachable set."""


class DegenerateCurve(ConvergenceError):
    """The curve carries no usable signal for the requested fit."""


class NegativeContrast(ConvergenceError):
    """Correlation fit produced a non-positive blinking contrast."""
