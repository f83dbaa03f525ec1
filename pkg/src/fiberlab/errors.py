"""Exception types shared across modules.

The CLI maps these onto exit statuses: precondition violations exit with 2,
numerical failures with 3.
"""


class PreconditionError(ValueError):
    """An input violates a documented precondition."""


class NumericalFailure(RuntimeError):
    """A numerical procedure did not reach its accuracy target."""
