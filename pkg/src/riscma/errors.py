"""Exception types shared across the package."""


class RiscmaError(Exception):
    """Base class for all package errors."""


class InvalidArgument(RiscmaError, ValueError):
    """An argument is outside the documented domain."""


class DegenerateChannel(RiscmaError, ValueError):
    """All channel gains vanish, so SNR-based quantities are undefined."""


class InfeasibleTarget(RiscmaError):
    """A requested attack target cannot be reached by any phase choice."""


class NumericalFailure(RiscmaError, ArithmeticError):
    """An iterative routine failed to converge or produced invalid output."""


class BracketError(RiscmaError, ValueError):
    """A root-finding interval does not contain a sign change."""


class ConfigError(RiscmaError, ValueError):
    """An experiment configuration is malformed."""
