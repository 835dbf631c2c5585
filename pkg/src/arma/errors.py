"""Exception types shared across the package."""


class ArmaError(Exception):
    """Base class for all package errors."""


class ShapeError(ArmaError):
    """Tensor or layer dimension mismatch."""


class WindowTooShortError(ArmaError):
    """Input sequence shorter than the conv stack admits."""


class WarmupError(ArmaError):
    """History buffer queried before it is full."""


class NonFiniteError(ArmaError):
    """A gradient or state became NaN/Inf; carries the offending name."""


class SimulationDivergedError(ArmaError):
    """Physics state left the finite domain; episode must terminate."""


class InfeasibleCommandError(ArmaError):
    """Commanded walking height unreachable for the leg geometry."""


class ConfigError(ArmaError):
    """Bad config file, unknown key, or out-of-range value."""


class CheckpointError(ArmaError):
    """Checkpoint file malformed, wrong version/phase, or incompatible."""
