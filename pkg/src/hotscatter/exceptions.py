"""Exception types raised across the package."""


class DomainError(ValueError):
    """A parameter lies outside the set where the quantity is defined."""


class InvalidSizeError(ValueError):
    """A system size (number of links, tracers, replicas) is not allowed."""


class ReducibleChainError(ValueError):
    """The embedded Markov chain is not irreducible."""


class InvalidTransitionMatrixError(ValueError):
    """A transition matrix violates the tracer/scatterer motion rules."""


class DivergentIntegralError(DomainError):
    """The velocity integral has no finite value (non-positive Gaussian rate)."""


class SolverError(RuntimeError):
    """A root finder or shooting solver failed to converge."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class ConfigError(ValueError):
    """An experiment configuration is malformed or inconsistent."""
