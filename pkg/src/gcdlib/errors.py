"""Exception types shared across the package."""


class GcdlibError(Exception):
    """Base class for all errors raised by gcdlib."""


class DimensionError(GcdlibError):
    """Operand shapes are incompatible."""


class DegenerateInputError(GcdlibError):
    """Input is numerically degenerate (e.g. near-zero row fed to a normalizer)."""


class ConfigError(GcdlibError):
    """Invalid or inconsistent configuration value."""


class NumericError(GcdlibError):
    """A computation produced a non-finite value."""


class FormatError(GcdlibError):
    """A binary file does not conform to its declared layout."""


class ConsistencyError(GcdlibError):
    """Two inputs that must agree (e.g. feature and label files) do not."""


class DataError(GcdlibError):
    """Dataset contents violate a precondition."""


class EvalError(GcdlibError):
    """Evaluation requested on inputs for which the metric is undefined."""
