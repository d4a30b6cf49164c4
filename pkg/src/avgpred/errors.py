"""Exception hierarchy shared by the library and the CLI."""


class AvgPredError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(AvgPredError, ValueError):
    """Matrix or vector shapes are inconsistent."""


class DomainError(AvgPredError, ValueError):
    """A time instant or interval lies outside the region where data exists."""


class OracleUnavailableError(DomainError):
    """The future switching signal does not cover the prediction window."""


class PreconditionError(AvgPredError):
    """A hypothesis of the stability theorem fails (controllability, Hurwitz gain)."""


class ConfigError(AvgPredError, ValueError):
    """A scenario file is malformed or internally inconsistent."""


class SimulationError(AvgPredError, RuntimeError):
    """The closed loop produced a non-finite value."""
