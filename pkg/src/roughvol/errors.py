"""Exception hierarchy.

Every error the library raises on purpose derives from :class:`RoughVolError`.
The CLI maps :class:`ConfigError` to exit code 1 and :class:`NumericError`
to exit code 2.
"""


class RoughVolError(Exception):
    pass


class ConfigError(RoughVolError, ValueError):
    """Invalid configuration, parameters outside their domain, bad CLI input."""


class CapacityError(ConfigError):
    """Requested Haar level exceeds the configured cap."""


class ContractError(ConfigError):
    """A function family is asked for a derivative order it does not provide."""


class NumericError(RoughVolError, ArithmeticError):
    """Quadrature, factorization or optimization failed."""


class DivergedError(NumericError):
    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class DegenerateVolatilityError(NumericError):
    pass
