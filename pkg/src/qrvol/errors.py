"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: data problems exit with 2,
configuration problems with 3.
"""


class QrvolError(Exception):
    """Base class for all package errors."""


class ArgumentError(QrvolError, ValueError):
    """An argument violates an operation's precondition."""


class SizeError(ArgumentError):
    """A requested quantum register exceeds the dense-simulation bound."""


class WindowError(ArgumentError):
    """Not enough history to build the requested regressors."""


class DataError(QrvolError, ValueError):
    """Input data is malformed, missing, or non-finite."""


class LossError(DataError):
    """A loss cannot be evaluated (e.g. a non-positive volatility level)."""


class ConfigError(QrvolError, ValueError):
    """A run or model configuration is invalid."""


class PlanError(ConfigError):
    """A rolling plan cannot be satisfied by the available data."""


class FitError(QrvolError, RuntimeError):
    """An iterative estimator failed to converge.

    ``best`` carries the best parameters found before giving up.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
