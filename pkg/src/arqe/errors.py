"""Exception types raised by the arqe package."""


class ArqeError(ValueError):
    """Base class for all package errors."""


class DimensionError(ArqeError):
    pass


class HermiticityError(ArqeError):
    pass


class UnitarityError(ArqeError):
    pass


class DomainError(ArqeError):
    """Argument outside the mathematical domain of an operation."""


class KnotValidationError(ArqeError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid knot set: " + "; ".join(self.violations))


class ConfigError(ArqeError):
    pass
