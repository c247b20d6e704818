"""Partially locked states of the Kuramoto model: self-consistency, spectral
stability, mean-field relaxation and finite-N checks."""

__version__ = "0.1.0"

from . import bicauchy, distributions, finiten, meanfield, pls, spectral
from .distributions import FrequencyDistribution
from .errors import (
    AxisTooClose,
    ContourTooClose,
    CutoffWarning,
    DegenerateDensity,
    DivergenceDetected,
    KuramotoError,
    NoBranch,
    NonConvergent,
    NoSolution,
    NotBimodal,
    NotEven,
    NumericalFailure,
    OutOfRange,
    PoleHit,
    UpperHalfPlane,
    WeightTooLarge,
)
from .pls import PlsState, beta, solve_rs
from .spectral import SpectralProblem, StabilityReport, Verdict, stability_verdict

__all__ = [
    "__version__", "bicauchy", "distributions", "finiten", "meanfield", "pls", "spectral",
    "FrequencyDistribution", "PlsState", "beta", "solve_rs", "SpectralProblem", "StabilityReport", "Verdict",
    "stability_verdict", "KuramotoError", "NumericalFailure", "NoSolution", "ContourTooClose", "NonConvergent",
    "NoBranch", "DivergenceDetected", "PoleHit", "DegenerateDensity", "UpperHalfPlane", "OutOfRange",
    "WeightTooLarge", "AxisTooClose", "NotEven", "NotBimodal", "CutoffWarning",
]
