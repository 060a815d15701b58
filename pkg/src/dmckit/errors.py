"""Exception hierarchy shared by all modules.

Exit-code mapping used by the CLI: validation-type errors -> 2,
capacity errors -> 3, invariant violations -> 4.
"""


class ToolkitError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(ToolkitError):
    """Malformed input object (non-stochastic row, bad file, unknown key)."""


class DimensionMismatchError(ValidationError):
    """Blocklengths or alphabets of two arguments do not agree."""


class DomainError(ValidationError):
    """Argument outside the documented range (eta > 1, x not in support)."""


class PreconditionError(ValidationError):
    """A documented operation precondition does not hold."""


class ConditioningError(ValidationError):
    """Conditioning on a zero-probability set."""


class CapacityError(ToolkitError):
    """Instance exceeds the dense-enumeration or exact-solver cap."""


class InvariantError(ToolkitError):
    """A check that must pass on every input failed."""
