"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An argument violates an operation's preconditions."""


class ConfigError(ValueError):
    """A configuration value is missing, unknown or inconsistent."""


class TrainingDiverged(RuntimeError):
    """The training loss or its gradient became non-finite."""
