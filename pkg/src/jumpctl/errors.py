"""Exception types shared across the package."""


class InvalidModelError(ValueError):
    """Robot model description violates a structural requirement."""


class InvalidInputError(ValueError):
    """An argument is malformed (wrong shape, zero where nonzero required, ...)."""


class SingularInertiaError(RuntimeError):
    """Locked inertia matrix is singular or numerically indefinite."""


class DegenerateFitError(RuntimeError):
    """Calibration samples do not determine the fit (e.g. all lengths equal)."""


class PlanningFailedError(RuntimeError):
    """The trajectory optimizer did not reach a feasible solution.

    Carries the solver report on the ``report`` attribute when available.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class UnreachableTargetError(RuntimeError):
    """Kinematic targets cannot be attained; closest point is attached."""

    def __init__(self, message, closest=None):
        super().__init__(message)
        self.closest = closest


class EvaluationError(RuntimeError):
    """A user callback returned NaN/inf; the offending iterate is attached."""

    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x


class SimulationDivergedError(RuntimeError):
    """State left the trust region of the integrator (NaN or blow-up)."""


class ConfigError(ValueError):
    """Scenario or configuration file is malformed."""
