"""Exception types shared across the package."""


class InputError(ValueError):
    """Malformed user input (files, flags, parameters).

    ``line`` carries the 1-based line number when the error comes from a file.
    """

    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where = f"{source}"
            if line is not None:
                where += f":{line}"
            where += ": "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class DomainError(ValueError):
    """Argument outside the domain of a utility function or its marginal."""


class PoolError(ValueError):
    """Pool shape does not meet the preconditions of an operation."""


class SolverError(RuntimeError):
    """Base class for numerical solver failures."""


class InfeasibleStateError(SolverError):
    def __init__(self, state_value, message="clearing level unreachable"):
        self.state_value = state_value
        super().__init__(f"state x={state_value!r}: {message}")


class ConvergenceError(SolverError):
    def __init__(self, message, residuals=None, iterations=None):
        self.residuals = residuals
        self.iterations = iterations
        super().__init__(message)
