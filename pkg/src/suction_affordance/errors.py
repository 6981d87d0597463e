"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class ConfigError(ValueError):
    """A configuration cannot be satisfied."""


class FormatError(ValueError):
    """A binary file or text record is malformed."""


class NoGraspError(RuntimeError):
    """A policy could not produce a grasp for the requested target."""
