"""Exception types shared by every module.

The CLI maps these onto its exit-code contract: ``RejectedInputError`` and
``ResourceError`` are usage problems (exit 1), ``PropertyViolation`` is a
failed check (exit 2).
"""


class HyperpercError(Exception):
    """Base class for all library errors."""


class RejectedInputError(HyperpercError, ValueError):
    """An argument violates an operation's precondition."""


class ResourceError(HyperpercError, RuntimeError):
    """A configured cap (vertex count, edge count, explored states) would be exceeded."""


class PropertyViolation(HyperpercError, AssertionError):
    """A checked invariant failed on concrete data."""


class InternalError(HyperpercError, RuntimeError):
    """Something that cannot happen on valid inputs did happen."""
