"""Exception hierarchy.

Validation problems derive from :class:`ValidationError`; everything raised
because a numerical procedure failed derives from :class:`NumericalFailure`.
The CLI maps the two families onto exit codes 2 and 3.
"""


class GpChaosError(Exception):
    """Base class for all package errors."""

    #: short machine-readable name of the violated invariant
    invariant = "unknown"

    def to_dict(self):
        return {"error": type(self).__name__, "invariant": self.invariant,
                "message": str(self)}


class ValidationError(GpChaosError, ValueError):
    invariant = "validation"

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field

    def to_dict(self):
        d = super().to_dict()
        d["field"] = self.field
        return d


class DimensionMismatch(ValidationError):
    invariant = "dimension"


class SizeMismatch(ValidationError):
    invariant = "equal_sample_counts"


class CapExceeded(ValidationError):
    invariant = "size_cap"


class NumericalFailure(GpChaosError, RuntimeError):
    invariant = "numerical"


class DensityFloor(NumericalFailure):
    invariant = "density_floor"


class NotNormalized(NumericalFailure):
    invariant = "normalization"


class NoConvergence(NumericalFailure):
    invariant = "convergence"

    def __init__(self, message, max_iter=None, residual=None):
        super().__init__(message)
        self.max_iter = max_iter
        self.residual = residual

    def to_dict(self):
        d = super().to_dict()
        d.update(max_iter=self.max_iter, residual=self.residual)
        return d


class EnergyIncrease(NumericalFailure):
    invariant = "energy_monotone"


class FitResidual(NumericalFailure):
    invariant = "linear_tail_fit"


class ZeroScatteringLength(NumericalFailure):
    invariant = "positive_scattering_length"


class DomainEscape(NumericalFailure):
    invariant = "paths_inside_box"


class AbsoluteContinuity(NumericalFailure):
    invariant = "absolute_continuity"


class MomentDiverged(NumericalFailure):
    invariant = "finite_moment"
