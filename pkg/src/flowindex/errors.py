"""Exception hierarchy shared by all modules.

Input problems (malformed files, non-unitary data, inadmissible sizes) derive
from ``ValueError`` so callers can treat them as bad input.  Mathematical
disagreements and failed index preconditions use separate classes so the CLI
can map them to a distinct exit status.
"""


class FlowIndexError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(FlowIndexError, ValueError):
    """Input data violates a structural requirement."""


class IndexConditionError(FlowIndexError):
    """A construction requires a particular index value that the input lacks."""

    def __init__(self, message, *, found=None, required=None):
        super().__init__(message)
        self.found = found
        self.required = required


class VerificationError(FlowIndexError):
    """Independent routes disagree or a residual exceeds its tolerance."""
