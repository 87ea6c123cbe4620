"""Exception hierarchy shared by every module."""


class CloudletError(Exception):
    """Base class for all errors raised by this package."""


class InvalidConfigError(CloudletError, ValueError):
    """A parameter is out of range or inconsistent."""


class ParseError(CloudletError, ValueError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class UnreachableError(CloudletError):
    """Two APs are not connected in the delay graph."""


class InfeasibleCapacityError(CloudletError):
    """The designated capacities cannot host every request."""


class ConstraintViolation(CloudletError):
    def __init__(self, constraint, message):
        self.constraint = constraint
        super().__init__(f"{constraint}: {message}")


class BudgetExceededError(CloudletError):
    """The exact solver would exceed its enumeration budget."""


class TimeLimitExceeded(CloudletError):
    pass
