"""Exception types shared across the package.

The CLI maps these onto exit codes: invalid input and config problems exit
with 2, infeasibility with 3, size limits with 4.
"""


class CranError(Exception):
    """Base class for all package errors."""


class InvalidInputError(CranError, ValueError):
    """Malformed or out-of-domain argument."""


class SizeLimitError(CranError):
    """Exhaustive enumeration would exceed the supported ground-set size."""


class InfeasibleError(CranError):
    """A requested construction cannot exist; ``shortfall`` says by how much."""

    def __init__(self, message: str, shortfall: float = float("nan")):
        super().__init__(message)
        self.shortfall = shortfall


class PreconditionError(CranError):
    """An operation was called on a set function whose properties are not verified."""


class DegenerateChannelError(CranError):
    """The channel carries no signal (all-zero gain), so the request is meaningless."""


class DegenerateScenarioError(CranError):
    """A geometry scenario without users or without relays."""
