"""Desk-scale numerics for Gross-Pitaevskii ground states, Nelson diffusions and chaos metrics."""
from .config import ARTIFACT_VERSION as __version__
from .core import Grid, SampleSet, ScalarField
from .errors import GpChaosError, NumericalFailure, ValidationError

__all__ = ["Grid", "ScalarField", "SampleSet", "GpChaosError", "NumericalFailure",
           "ValidationError", "__version__"]
