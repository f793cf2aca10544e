"""Exception types shared across the package."""


class StormerlabError(Exception):
    """Base class for all package errors."""


class DomainError(StormerlabError, ValueError):
    """A state or parameter violates an operation's domain precondition."""


class ConfigError(StormerlabError, ValueError):
    """Invalid configuration (bad tolerances, grid bounds, CLI flags...)."""


class IntegrationError(StormerlabError, RuntimeError):
    """The integrator failed (step-size underflow, step budget exceeded)."""


class RefinementError(StormerlabError, RuntimeError):
    """Root refinement lost its bracket (residual unreachable or no root)."""


class ClassificationError(StormerlabError, RuntimeError):
    """A located orbit could not be assigned a perpendicular-crossing class."""
