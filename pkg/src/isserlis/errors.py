"""Exception types shared across the package.

The CLI maps :class:`ValidationError` to exit code 2 and
:class:`NumericalError` to exit code 3.
"""


class IsserlisError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(IsserlisError, ValueError):
    """Bad input: wrong shape, out-of-range index, malformed file."""


class NumericalError(IsserlisError, ArithmeticError):
    """A computation could not produce a trustworthy number."""
