"""Exception hierarchy."""


class ConetessError(Exception):
    pass


class DomainError(ConetessError, ValueError):
    """Argument outside the range where a quantity is defined."""


class OutOfRangeError(DomainError):
    """Formula requested outside the parameter range it was derived for."""


class PrecisionError(ConetessError, ArithmeticError):
    def __init__(self, msg, achieved=None):
        super().__init__(msg if achieved is None else f"{msg} (achieved {achieved})")
        self.achieved = achieved


class GeneralPositionError(ConetessError):
    """Arrangement fails certification or a count theorem (a hard assertion)."""

    def __init__(self, msg, arrangement=None):
        super().__init__(msg)
        self.arrangement = arrangement


class UnsupportedInputError(ConetessError, ValueError):
    pass


class ConfigurationError(ConetessError, ValueError):
    pass
