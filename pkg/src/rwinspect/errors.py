"""Exception types shared across the package."""


class MapError(ValueError):
    """A map document or MapSpec is malformed or unusable."""


class ConfigError(ValueError):
    """An experiment config document is malformed or inconsistent."""


class InvariantViolation(RuntimeError):
    """An internal consistency check failed (signals a bug, not bad input)."""
