"""
Exception hierarchy shared by every stage of the inversion pipeline
"""
import copy


class InversionError(Exception):
    """Base class for all pipeline errors"""

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details

    def with_context(self, context: str):
        """Return a copy of this error with a context prefix prepended"""
        err = copy.copy(self)
        err.args = (f"{context}: {self}",)
        return err


class GeometryError(InversionError):
    """Invalid geometry, coverage gap or point outside the coefficient cells"""


class ConfigError(InversionError):
    """Configuration schema problem; `keys` lists the offending entries"""

    def __init__(self, message, keys=None, **details):
        super().__init__(message, keys=list(keys or []), **details)
        self.keys = list(keys or [])


class StabilityError(InversionError):
    """Time step violates the CFL bound"""


class DivergenceError(InversionError):
    """Non-finite values appeared during time stepping"""


class PositivityError(InversionError):
    """A logarithm consumer received a nonpositive value"""

    def __init__(self, message, index=None, location=None, **details):
        super().__init__(message, index=index, location=location, **details)
        self.index = index
        self.location = location


class DegenerateWaveformError(InversionError):
    """Laplace transform of the source waveform vanishes"""


class SolverError(InversionError):
    """Iterative linear solve did not reach its tolerance"""

    def __init__(self, message, residual=None, **details):
        super().__init__(message, residual=residual, **details)
        self.residual = residual


class CompatibilityError(InversionError):
    """Adjoint forcing does not vanish at the final time"""


class DimensionMismatchError(InversionError):
    """Two trace sets or fields do not share the same sampling"""


class NoArrivalError(InversionError):
    """Trace never rises above the arrival threshold"""


class TruncationError(InversionError):
    """Requested time shift exceeds the usable record"""


class LineSearchStall(InversionError):
    """Backtracking exhausted its trials without sufficient decrease"""
