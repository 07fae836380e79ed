"""Exception hierarchy shared by all gpnet modules."""


class GPNetError(Exception):
    """Base class for every error raised by gpnet."""


class InvalidParameterError(GPNetError, ValueError):
    """Distribution or model parameters violate their invariants."""


class DomainError(GPNetError, ValueError):
    """An argument lies outside the domain where a quantity is defined."""


class RangeError(GPNetError, ValueError):
    """An integer argument is outside the supported range."""


class MaskedEntryError(GPNetError, ValueError):
    """A computation needs an observed entry but found a missing one."""


class DegenerateSequenceError(GPNetError, ValueError):
    """A diagnostic was asked of a constant or too-short sequence."""


class ConfigError(GPNetError, ValueError):
    """Inconsistent model, sampler or command configuration."""


class ParseError(GPNetError, ValueError):
    """Malformed input file."""


class NoMissingEntriesError(GPNetError, ValueError):
    """Imputation was requested for a network without missing entries."""


class InsufficientDrawsError(GPNetError, ValueError):
    """Too few predictive draws to compute calibration metrics."""
