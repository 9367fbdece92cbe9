"""Controller manipulation attacks on RIS-assisted links and their detection."""
from .errors import (BracketError, ConfigError, DegenerateChannel, InfeasibleTarget, InvalidArgument,
                     NumericalFailure, RiscmaError)

__version__ = "0.1.0"
