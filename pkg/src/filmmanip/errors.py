"""Exception hierarchy shared by every module."""


class ManipulatorError(Exception):
    """Base class for domain errors (CLI maps these to exit status 1)."""


class InvalidInputError(ManipulatorError, ValueError):
    pass


class DegenerateDirectionError(ManipulatorError):
    """Two needle points coincide, so the needle axis is undefined."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class SingularDesignError(ManipulatorError):
    """Least-squares design matrix is rank deficient."""

    def __init__(self, message, directions=None):
        super().__init__(message)
        self.directions = directions


class UnreachableError(ManipulatorError):
    """IK target lies outside the reachable set within tolerance."""

    def __init__(self, message, residual, currents):
        super().__init__(message)
        self.residual = residual
        self.currents = currents


class ConvergenceError(ManipulatorError):
    pass


class MorphTransitionError(ManipulatorError):
    pass


class MorphViolationError(ManipulatorError):
    pass


class ObjectiveError(ManipulatorError):
    def __init__(self, message, params=None):
        super().__init__(message)
        self.params = params


class ConfigError(ManipulatorError):
    pass


class DatasetError(ManipulatorError):
    pass


class EmptyDatasetError(DatasetError):
    pass


class BoundsError(ManipulatorError):
    pass
