"""Exceptions that name the violated assumption."""


class AssumptionError(ValueError):
    """A hypothesis of the asymptotic theory fails for the given inputs.

    The message always names the assumption (flux range, decay exponent,
    positivity of the coupling, simplicity of the selected eigenvalue, ...).
    """


class ConfigError(ValueError):
    """Malformed run configuration; message names the offending key."""


class DomainError(ValueError):
    """Numerical domain too small or resolution insufficient for the request."""
