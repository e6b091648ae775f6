"""Exception types shared across the library.

The CLI maps InputError (and file/parse failures) to exit code 2 and
NumericalError to exit code 1.
"""


class InputError(ValueError):
    """Malformed or inconsistent input (dimension mismatch, bad config, ...)."""


class NumericalError(ArithmeticError):
    """A computation became degenerate (singular innovation covariance, ...)."""
