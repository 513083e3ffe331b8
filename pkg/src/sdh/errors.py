class UsageError(ValueError):
    """Raised when an operation is called with arguments outside its contract."""


class NumericError(ArithmeticError):
    """Raised when a solver or learner produces non-finite values."""
