"""Exception hierarchy shared by all gridclust modules."""


class GridClustError(Exception):
    """Base class for every error raised by gridclust."""


class GridFormatError(GridClustError):
    """The grid document is not valid JSON or violates the schema."""

    def __init__(self, message, field=None, line=None, column=None):
        super().__init__(message)
        self.field = field
        self.line = line
        self.column = column


class GridValidationError(GridClustError):
    """The grid is well-formed but physically or referentially invalid."""


class HomogeneityError(GridValidationError):
    """Lines do not share a common R/X ratio."""

    def __init__(self, message, offending_lines=()):
        super().__init__(message)
        self.offending_lines = tuple(offending_lines)


class ProportionalityError(GridValidationError):
    """Droop gains are not proportional (M != kN)."""


class ReductionError(GridClustError):
    """Kron reduction failed (singular eliminated block)."""


class SpectrumError(GridClustError):
    pass


class BoundaryError(GridClustError):
    """No stability boundary could be located."""


class SensitivityError(GridClustError):
    pass


class EigenSolverError(GridClustError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class HypothesisError(GridClustError):
    """A precondition of the mode-decoupling result is violated."""


class SimulationError(GridClustError):
    pass
