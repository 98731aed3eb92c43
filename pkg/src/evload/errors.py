"""Exception hierarchy shared across the package."""


class EvloadError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(EvloadError, ValueError):
    """Invalid configuration; the message names the offending key."""

    exit_code = 2


class GridMismatchError(EvloadError, ValueError):
    exit_code = 2


class DomainError(EvloadError, ValueError):
    """Argument outside the domain of a mathematical operation."""

    exit_code = 3


class NumericalError(EvloadError, ArithmeticError):
    """Quadrature or root finding failed to reach its tolerance."""

    exit_code = 3


class InfeasibleError(EvloadError, ValueError):
    """A charging session or moment target cannot be satisfied."""

    exit_code = 4


class SamplingError(EvloadError, RuntimeError):
    """Accept-reject sampling exhausted its attempt budget."""

    exit_code = 4
