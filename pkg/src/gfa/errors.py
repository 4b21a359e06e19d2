"""Exception hierarchy.

The CLI maps :class:`ConfigError` to exit code 2 and :class:`NumericalError`
to exit code 3.
"""


class GfaError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(GfaError, ValueError):
    """Invalid user input detected before any computation starts."""


class CapacityError(ConfigError):
    """Requested state-space is larger than the configured limit."""


class NumericalError(GfaError, RuntimeError):
    """A numerical stage failed (non-convergence, breakdown, underflow)."""


class DisconnectedGraphError(NumericalError):
    """The transition graph used for an embedding is not connected."""

    def __init__(self, n_components):
        self.n_components = int(n_components)
        super().__init__(
            f"transition graph is disconnected ({self.n_components} components)"
        )


class ConvergenceError(NumericalError):
    """An iterative solver did not reach its tolerance."""


class IntegrationError(NumericalError):
    """ODE integration stopped early; carries the last state reached."""

    def __init__(self, message, t_last=None, y_last=None):
        self.t_last = t_last
        self.y_last = y_last
        super().__init__(f"{message} (t={t_last}, y={y_last})")
