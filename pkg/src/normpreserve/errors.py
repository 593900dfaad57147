"""Exception hierarchy.

Every error raised by the library derives from :class:`NormPreserveError`, so
the CLI can map "bad input" to exit code 3 with a single ``except`` clause.
"""

from __future__ import annotations


class NormPreserveError(Exception):
    """Base class for all library errors."""


class NumericalFailure(NormPreserveError):
    """An underlying numerical routine (eigensolver, SVD) did not converge."""


class DimensionMismatchError(NormPreserveError, ValueError):
    pass


class SingularMatrixError(NormPreserveError, ValueError):
    pass


class NotPositiveDefiniteError(NormPreserveError, ValueError):
    pass


class NotSymmetricError(NormPreserveError, ValueError):
    pass


class NotOrthogonalError(NormPreserveError, ValueError):
    pass


class NotUnitVectorError(NormPreserveError, ValueError):
    pass


class DegeneratePerturbationError(NormPreserveError, ValueError):
    """A rank-one perturbation with ``epsilon == 0``."""


class InvalidPartitionError(NormPreserveError, ValueError):
    pass


class UnsupportedMeanError(NormPreserveError, ValueError):
    pass


class NotPushforwardClosedError(NormPreserveError, ValueError):
    """The source covariance is not in the admissible class of the transform.

    ``signs`` and ``other_signs`` name two positive-measure sign patterns
    whose conjugated covariances disagree.
    """

    def __init__(self, message, signs=None, other_signs=None, deviation=None):
        super().__init__(message)
        self.signs = signs
        self.other_signs = other_signs
        self.deviation = deviation


class ProbeAtPoleError(NormPreserveError, ValueError):
    def __init__(self, message, z=None):
        super().__init__(message)
        self.z = z


class TooFewPairsError(NormPreserveError, ValueError):
    pass


class DegenerateConfigurationError(NormPreserveError, ValueError):
    """Source means (or probe directions) do not span the space."""


class InconsistentDataError(NormPreserveError, ValueError):
    pass


class NoIsometryError(NormPreserveError, ValueError):
    def __init__(self, message, worst_pair=None, deviation=None):
        super().__init__(message)
        self.worst_pair = worst_pair
        self.deviation = deviation


class NotInFamilyError(NormPreserveError, ValueError):
    pass


class EstimationFailureError(NormPreserveError, ValueError):
    pass


class ModelMismatchError(NormPreserveError, ValueError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class UnsupportedDimensionError(NormPreserveError, ValueError):
    pass


class NonUnitJacobianError(NormPreserveError, ValueError):
    pass


class SchemaError(NormPreserveError, ValueError):
    """Malformed input file; ``pointer`` is a JSON pointer or ``line N``."""

    def __init__(self, message, source=None, pointer=None):
        where = ""
        if source is not None:
            where = f"{source}"
        if pointer is not None:
            where = f"{where}{'' if not where else ' '}at {pointer}"
        super().__init__(f"{where}: {message}" if where else message)
        self.source = source
        self.pointer = pointer
