"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or physically meaningless configuration."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class IntegrationError(RuntimeError):
    """Non-finite values appeared while integrating the field equations."""

    def __init__(self, message, step=None, trajectory=None):
        super().__init__(message)
        self.step = step
        self.trajectory = trajectory


class ConvergenceError(RuntimeError):
    pass


class UndefinedObservable(ValueError):
    """An observable is undefined for the given input (e.g. zero population)."""


class NoRevivalError(ValueError):
    pass


class TruncationError(ValueError):
    pass
