"""Exception hierarchy.

``NumericalFailure`` subclasses map to CLI exit code 3; everything else
derived from ``KuramotoError`` is treated as a usage/config problem.
"""


class KuramotoError(Exception):
    """Base class for all library errors."""


class NumericalFailure(KuramotoError):
    """A computation ran but could not produce a trustworthy answer."""


class PoleHit(KuramotoError):
    pass


class DegenerateDensity(KuramotoError):
    pass


class UpperHalfPlane(KuramotoError):
    pass


class OutOfRange(KuramotoError):
    pass


class NoSolution(NumericalFailure):
    pass


class WeightTooLarge(KuramotoError):
    pass


class AxisTooClose(KuramotoError):
    pass


class ContourTooClose(NumericalFailure):
    pass


class NonConvergent(NumericalFailure):
    pass


class NotEven(KuramotoError):
    pass


class NoBranch(NumericalFailure):
    pass


class NotBimodal(KuramotoError):
    pass


class DivergenceDetected(NumericalFailure):
    pass


class CutoffWarning(UserWarning):
    """Highest retained Fourier mode is not negligible."""
