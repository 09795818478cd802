"""
Базовые исключения пакета.

Категории нужны CLI для контракта кодов возврата:
  - ConfigError, DomainError -> 1
  - SolverError              -> 2
Конкретные исключения объявляются в своих модулях и наследуются отсюда.
"""


class EpidemicSolverError(Exception):
    """Base class for all errors raised by the package."""
    pass


class ConfigError(EpidemicSolverError):
    """Invalid configuration: bad file, unknown key, parameter out of range."""
    pass


class DomainError(EpidemicSolverError):
    """Argument outside the mathematical domain of an operation (e.g. t < 0)."""
    pass


class SolverError(EpidemicSolverError):
    """Numerical procedure failed: iteration breakdown, divergence, missing root."""
    pass
