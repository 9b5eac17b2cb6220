"""Exception types shared across the package."""


class SNError(Exception):
    """Base class for all errors raised by snlab."""


class InvalidArgument(SNError, ValueError):
    pass


class NumericalFailure(SNError, ArithmeticError):
    pass


class NonConvergence(SNError):
    """An iteration hit its limit; ``residual`` and ``history`` describe the last state."""

    def __init__(self, message, residual=None, history=None):
        super().__init__(message)
        self.residual = residual
        self.history = list(history) if history is not None else []


class StepFailure(NonConvergence):
    pass


class SelectionFailure(SNError):
    pass


class AmbiguousBranch(SelectionFailure):
    def __init__(self, message, candidates):
        super().__init__(message)
        self.candidates = candidates


class BranchLost(SelectionFailure):
    def __init__(self, message, last_good_omega):
        super().__init__(message)
        self.last_good_omega = last_good_omega


class BoundInapplicable(SNError, ValueError):
    pass


class FitMeaningless(SNError, ValueError):
    pass


class ConfigError(SNError, ValueError):
    def __init__(self, message, key=None, line=None):
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.key = key
        self.line = line
