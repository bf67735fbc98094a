"""Exception types raised across the package."""


class InvalidArgumentError(ValueError):
    """A caller passed arguments with the wrong shape or an out-of-range value."""


class InvalidInputError(ValueError):
    """A data value (likelihood ratio, log-ratio) is non-finite or non-positive."""


class NotDerivableError(ValueError):
    """A quantity cannot be derived for the requested statistic kind."""


class UndefinedResultError(ValueError):
    """An estimator has no qualifying records to average over."""


class ConfigError(ValueError):
    """An experiment configuration is malformed."""
