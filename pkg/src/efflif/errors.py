"""Exception hierarchy shared across the package."""


class EfflifError(Exception):
    pass


class DimensionError(EfflifError, ValueError):
    pass


class DivisibilityError(DimensionError):
    pass


class ConfigError(EfflifError, ValueError):
    pass


class UnsupportedModeError(ConfigError):
    pass


class DataError(EfflifError, ValueError):
    pass


class StateError(EfflifError, RuntimeError):
    pass


class NumericError(EfflifError, ArithmeticError):
    pass


class DivergenceError(NumericError):
    pass
