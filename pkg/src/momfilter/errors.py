"""Exception hierarchy.  The CLI maps each class to its own exit code."""


class MomfilterError(Exception):
    exit_code = 1


class ConfigError(MomfilterError, ValueError):
    exit_code = 2


class BlowUpError(MomfilterError, ArithmeticError):
    """The solver state became non-finite or exceeded the magnitude guard."""

    exit_code = 3

    def __init__(self, message: str, step: int | None = None, mode=None, order: int | None = None):
        super().__init__(message)
        self.step = step
        self.mode = mode
        self.order = order


class ExpansionBreakdownError(MomfilterError, ArithmeticError):
    """Truncated expansion produced a non-positive mass or a non-real density."""

    exit_code = 3


class OracleMismatchError(MomfilterError):
    exit_code = 4
