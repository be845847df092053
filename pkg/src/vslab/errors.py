"""Semantic exception hierarchy shared across the package."""


class VslabError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(VslabError):
    """Invalid, unknown, or missing configuration input."""


class DegenerateModelError(VslabError):
    """Model has no signal (both mean vectors zero) or is otherwise unusable."""


class MemoryBoundError(VslabError):
    """Requested dataset exceeds the configured n*d element cap."""


class NonSeparableError(VslabError):
    """Hard-margin program is infeasible (detected via dual divergence)."""


class RankDeficiencyError(VslabError):
    """Gram matrix is singular or too ill-conditioned to trust."""


class SolverTimeoutError(VslabError):
    """Iteration budget exhausted before reaching tolerance.

    Carries the best iterate found so far in ``best``.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class DivergenceError(VslabError):
    """Gradient descent diverged at a user-supplied step size.

    ``iteration`` is the step index at which divergence was detected.
    """

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class VerificationFailure(VslabError):
    """A hard verification check failed (CLI exit code 4)."""
