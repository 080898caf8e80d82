"""Conserved information-flow indices of quantum walks and cellular automata on rings."""

from .errors import FlowIndexError, IndexConditionError, ValidationError, VerificationError
from .tolerances import DEFAULT as DEFAULT_TOLERANCES, Tolerances

__all__ = [
    "FlowIndexError",
    "IndexConditionError",
    "ValidationError",
    "VerificationError",
    "Tolerances",
    "DEFAULT_TOLERANCES",
]
__version__ = "0.1.0"
