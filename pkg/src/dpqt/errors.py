"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the function."""


class BracketError(ValueError):
    """A root finder was given an interval without a sign change."""


class NotSymmetricError(ValueError):
    pass


class NotPositiveDefiniteError(ValueError):
    pass


class ZeroSensitivityError(ValueError):
    """Calibration requested for a query whose sensitivity is zero.

    A zero-sensitivity query can be released without noise, so callers are
    expected to special-case it rather than ask for a noise scale.
    """


class ConfigError(ValueError):
    """A run configuration failed validation."""
