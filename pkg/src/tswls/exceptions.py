class TSWLSError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateGeometryError(TSWLSError):
    """Anchor/MU configuration for which an angle, range or scaling is undefined."""


class SingularSystemError(TSWLSError):
    """Normal equations (or a weight/scaling matrix) could not be factorized."""

    def __init__(self, message, cond=None):
        super().__init__(message)
        self.cond = cond


class ConvergenceError(TSWLSError):
    """Stage-1 reweighting did not settle within the iteration budget."""

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last
