"""Exception types shared across the package."""


class WongReduceError(Exception):
    """Base class for all package errors."""


class NotAntisymmetric(WongReduceError):
    """Structure constants are not antisymmetric in their lower indices."""


class JacobiViolation(WongReduceError):
    """Structure constants violate the Jacobi identity."""


class IndefiniteKilling(WongReduceError):
    """-k is not positive definite (algebra not compact semisimple)."""


class SingularFP(WongReduceError):
    """Faddeev-Popov matrix (or orbit metric) is numerically singular."""


class NotOnSigma(WongReduceError):
    """Point does not satisfy the gauge constraints to tolerance."""


class IllConditioned(WongReduceError):
    """A linear solve exceeded the admissible condition number."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}


class ChartOutOfRange(WongReduceError):
    """Group coordinates left the exponential chart."""


class NoConvergence(WongReduceError):
    """Iterative solver did not reach its residual tolerance."""

    def __init__(self, message, iterations=None, residual=None, best=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual
        self.best = best


class EigenCrossing(WongReduceError):
    """Tracked eigenvector lost continuity (overlap below threshold)."""


class StepFailure(WongReduceError):
    """Integration step failed at a given time."""

    def __init__(self, t, reason):
        super().__init__(f"step failed at t={t}: {reason}")
        self.t = t
        self.reason = reason


class BlowUp(WongReduceError):
    """State norm exceeded the blow-up guard during integration."""


class ConfigInvalid(WongReduceError):
    """Run configuration failed validation."""

    def __init__(self, path, key, message):
        super().__init__(f"{path}: invalid config key '{key}': {message}")
        self.path = path
        self.key = key


class MissingArtifact(WongReduceError):
    """A required run artifact is absent."""
