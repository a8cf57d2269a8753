"""Exception hierarchy shared across the package."""


class ShofarError(Exception):
    """Base class for all package errors."""


class InputError(ShofarError, ValueError):
    """An argument violates a documented precondition."""


class NotPSDError(ShofarError, ValueError):
    """A matrix required to be positive semidefinite has a negative eigenvalue."""

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class ConvexityError(NotPSDError):
    """The ridge supplied to an estimated-kernel program is too small."""

    def __init__(self, message, required_ridge):
        super().__init__(message)
        self.required_ridge = required_ridge


class SolverError(ShofarError, RuntimeError):
    """The cone solver did not return an optimal certificate."""

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class MitigationError(ShofarError, ValueError):
    """Error-mitigation estimate is out of its valid range."""


class GenerationError(ShofarError, RuntimeError):
    """A dataset generator failed to produce enough accepted points."""


class ParseError(ShofarError, ValueError):
    """A persisted file is malformed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ScheduleExhausted(ShofarError, RuntimeError):
    """The N_practical search ran past its largest allowed shot count."""

    def __init__(self, message, last_delta_emp):
        super().__init__(message)
        self.last_delta_emp = last_delta_emp


class ConfigError(ShofarError, ValueError):
    """A run configuration failed validation; ``problems`` lists every violation."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))
