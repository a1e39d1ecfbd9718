"""Exception types shared across the package.

Each carries an ``exit_code`` so the command-line front end can map failures
to distinct process exit statuses.
"""


class OmarlError(Exception):
    exit_code = 1


class UsageError(OmarlError):
    exit_code = 2


class ConfigError(OmarlError, ValueError):
    exit_code = 3


class PlacementInfeasibleError(ConfigError):
    """Rejection sampling could not place an AP or UE within the attempt cap."""


class IncompatibleConfigError(ConfigError):
    pass


class DatasetIOError(OmarlError, OSError):
    exit_code = 4


class NumericalError(OmarlError, ArithmeticError):
    exit_code = 5


class NonFiniteError(NumericalError):
    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (gradient step {step})")
        self.step = step


class DimensionError(OmarlError, ValueError):
    pass


class InvalidActionError(OmarlError, ValueError):
    pass


class TooFewSamplesError(OmarlError, ValueError):
    pass


class EmptyDatasetError(ConfigError):
    pass
