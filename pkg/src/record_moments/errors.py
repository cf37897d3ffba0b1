"""Semantic exception hierarchy for the package.

Public functions raise these instead of bare ValueError so that callers
(and the CLI exit-code mapping) can distinguish bad input from
out-of-domain mathematics and from numerical failure.
"""


class RecordMomentsError(Exception):
    """Base error for this package."""


class ConfigurationError(RecordMomentsError, ValueError):
    """Malformed input: unknown family, invalid parameters, bad JSON."""


class DomainError(RecordMomentsError):
    """Input is structurally valid but outside the mathematical domain
    of the operation (e.g. a distribution whose records have no finite
    expectations, or a degenerate source)."""


class DegenerateInputError(DomainError):
    """A non-degenerate random variable is required."""


class NonConvergenceError(RecordMomentsError):
    """A numerical routine could not certify its result at the requested
    tolerance.  Carries the partial result when available."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
