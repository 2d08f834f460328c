"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when an input violates an operation's precondition."""


class ConfigurationError(ValueError):
    """Raised for inconsistent or out-of-range configuration values."""


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss becomes non-finite."""
