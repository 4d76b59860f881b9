"""Exception types shared across the package."""


class HdtreatError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(HdtreatError, ValueError):
    """Inputs have inconsistent or unusable shapes."""


class SingularDesignError(HdtreatError, ValueError):
    """Design matrix is rank deficient.

    Attributes
    ----------
    column : int or str or None
        Offending column (index or name) when it could be identified.
    """

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class DegenerateInputError(HdtreatError, ValueError):
    """Input is degenerate for the requested computation (e.g. constant
    residual vector, zero residual sum of squares)."""


class ConstantColumnError(HdtreatError, ValueError):
    """A column has zero sample variance and cannot be standardized."""

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class ConvergenceError(HdtreatError, RuntimeError):
    """An iterative procedure failed to converge (only raised when the
    caller asked for strict convergence)."""


class SelectionOverflowError(HdtreatError, RuntimeError):
    """A selection step returned more variables than the final OLS stage
    can estimate.  Raised explicitly rather than silently refitting."""


class UnionOverflowError(SelectionOverflowError):
    """The union of the two selection steps is too large for the final
    OLS stage.  Carries both per-equation counts."""

    def __init__(self, message, k_outcome=None, k_treatment=None):
        super().__init__(message)
        self.k_outcome = k_outcome
        self.k_treatment = k_treatment


class SchemaError(HdtreatError, ValueError):
    """An input file does not match the expected column schema."""


class ConfigError(HdtreatError, ValueError):
    """Invalid run or method configuration."""
