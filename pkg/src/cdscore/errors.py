"""Exception and warning classes.

Errors split into two families so the CLI can map them onto exit codes:
``ValidationError`` (bad input, exit 1) and ``SolverError`` (numerical
failure, exit 2).
"""


class CDScoreError(Exception):
    """Base class for all package errors."""


class ValidationError(CDScoreError, ValueError):
    pass


class SolverError(CDScoreError, RuntimeError):
    pass


# -- input / shape validation ------------------------------------------------

class DegenerateVariance(ValidationError):
    pass


class InvalidReplicates(ValidationError):
    pass


class NotSymmetric(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class EmptyGrid(ValidationError):
    pass


class FoldTooSmall(ValidationError):
    pass


class BadRho(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class MissingColumn(ParseError):
    pass


class NonNumericCell(ParseError):
    pass


# -- numerical failures ------------------------------------------------------

class NonConvergence(SolverError):
    """Iteration cap reached; ``best`` carries the last iterate when available."""

    def __init__(self, message, best=None, diagnostics=None):
        super().__init__(message)
        self.best = best
        self.diagnostics = diagnostics or {}


class EigFailure(SolverError):
    pass


class Infeasible(SolverError):
    pass


class SolverStall(SolverError):
    pass


class NonPositiveVariance(SolverError):
    pass


class DegenerateDenominator(SolverError):
    pass


# -- warnings ----------------------------------------------------------------

class CDScoreWarning(UserWarning):
    pass


class NegativeMomentEstimate(CDScoreWarning):
    pass


class SingularDiagonal(CDScoreWarning):
    pass


class SupportTooLarge(CDScoreWarning):
    pass


class NegativeVarianceEstimate(CDScoreWarning):
    pass
