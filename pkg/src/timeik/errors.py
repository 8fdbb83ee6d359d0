"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An input broke a documented precondition (shape, limits, unit norm)."""


class ModelFileError(ValueError):
    """A robot model, dataset or approximator file could not be parsed."""


class NoFreeSampleError(RuntimeError):
    """Rejection sampling ran out of tries without finding a free configuration."""


class PlanningError(RuntimeError):
    """The motion planner exhausted its extension budget."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")


class NoSolutionError(RuntimeError):
    """No IK candidate converged; ``best_infeasible`` holds the closest one."""

    def __init__(self, message: str, best_infeasible=None, position_error=None,
                 orientation_error=None):
        super().__init__(message)
        self.best_infeasible = best_infeasible
        self.position_error = position_error
        self.orientation_error = orientation_error
