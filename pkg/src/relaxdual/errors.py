"""Exception hierarchy shared by all modules."""


class RelaxDualError(Exception):
    """Base class for every error raised by the package."""


class ConnectivityFailure(RelaxDualError):
    pass


class InvalidSize(RelaxDualError, ValueError):
    pass


class DimensionMismatch(RelaxDualError, ValueError):
    pass


class NegativeSlack(RelaxDualError, ValueError):
    pass


class TooLarge(RelaxDualError, ValueError):
    pass


class NonConvergence(RelaxDualError):
    """An iterative solver hit its iteration cap before meeting its tolerance."""

    def __init__(self, message, *, agent=None, residual=None):
        if agent is not None:
            message = f"agent {agent + 1}: {message}"
        super().__init__(message)
        self.agent = agent
        self.residual = residual


class ConfigError(RelaxDualError, ValueError):
    """Malformed or inconsistent experiment configuration."""

    def __init__(self, message, *, field=None):
        if field is not None:
            message = f"[{field}] {message}"
        super().__init__(message)
        self.field = field
