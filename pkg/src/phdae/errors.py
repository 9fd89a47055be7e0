"""Exception types shared across the package."""


class PhDaeError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(PhDaeError):
    """Operands have incompatible shapes."""


class SingularMatrix(PhDaeError):
    """A pivot fell below the singularity threshold during factorization."""


class SingularJacobian(PhDaeError):
    """The step Jacobian J_r is singular: the model is not index-1 at this
    step size, or the parameters are degenerate."""


class NoConvergence(PhDaeError):
    """Newton iteration exhausted max_newton_iters without converging."""


class SingularAlgebraicBlock(PhDaeError):
    """The algebraic sub-block cannot be solved for the algebraic states."""


class InsufficientData(PhDaeError):
    """Dataset too short for the requested operation."""


class DegenerateSignal(PhDaeError):
    """Signal has zero variance; SNR-relative noise is undefined."""


class InvalidParameter(PhDaeError):
    """A configuration or physical parameter violates its constraints."""


class ParseError(PhDaeError):
    """Malformed input file.

    Carries the offending 1-based line number when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SolverFailure(PhDaeError):
    """A solver error occurred inside a longer-running procedure; the message
    carries the epoch/batch or step context."""
