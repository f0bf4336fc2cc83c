"""Exception hierarchy.

Validation problems (bad parameters, malformed configs) derive from
``ValueError``; numeric preconditions that only fail for particular physical
inputs (caustics, grids that are too narrow) derive from
``NumericPreconditionError`` so callers such as the CLI can map them to a
distinct exit status.
"""


class SmearpropError(Exception):
    """Base class for all package errors."""


class ValidationError(SmearpropError, ValueError):
    """A parameter or configuration value is out of its allowed range."""


class NumericPreconditionError(SmearpropError, ValueError):
    """A numeric precondition (caustic window, grid fit, integrability) failed."""


class CausticError(NumericPreconditionError):
    """Time lies outside the caustic-free window ``0 < t < pi/lambda``."""


class GridFitError(NumericPreconditionError):
    """A smearing Gaussian does not fit inside the grid."""


class NotIntegrableError(NumericPreconditionError):
    """Real part of a quadratic form is not positive definite."""


class IndefiniteMatrixError(NumericPreconditionError):
    """Elimination met a nonpositive pivot.

    ``index`` is the 1-based order of the first nonpositive leading minor.
    """

    def __init__(self, message, index):
        super().__init__(message)
        self.index = index
