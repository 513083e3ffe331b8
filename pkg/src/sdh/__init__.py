"""Stochastic decision horizons: survival-shaped objectives, solvers and agents on finite MDPs."""

__version__ = "0.1.0"

from sdh.errors import NumericError, UsageError

__all__ = ["NumericError", "UsageError", "__version__"]
