"""
Exception hierarchy shared by all finsflow modules.
"""


class ConfigurationError(ValueError):
    """
    Raised when a configuration value or an operation precondition is violated.

    :param message: Human readable description naming the offending field
    :param field: Optional dotted field name, e.g. ``estimate.alpha``
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class DomainError(ValueError):
    """
    Raised when a quantity is evaluated outside its mathematical domain.
    """


class MetricAdmissibilityError(ValueError):
    """
    Raised when a metric family is not a strongly convex Finsler norm.
    """


class SmoothnessError(ValueError):
    """
    Raised when a derivative beyond the smoothness promise of a family is requested.
    """


class SolverError(RuntimeError):
    """
    Raised when the Legendre Newton iteration does not converge.

    :param message: Description of the failure
    :param residual: Final residual norm of the worst sample
    :param node: Optional grid node (row, column) or batch index of the worst sample
    """

    def __init__(self, message, residual, node=None):
        super().__init__(message)
        self.residual = residual
        self.node = node


class IntegrationQualityError(RuntimeError):
    """
    Raised when the geodesic integrator loses the first integral F.

    :param message: Description of the failure
    :param drift: Observed relative drift of F along the path
    """

    def __init__(self, message, drift):
        super().__init__(message)
        self.drift = drift


class PositivityError(RuntimeError):
    """
    Raised when the heat flow produces a non-positive value.

    :param message: Description of the failure
    :param stamp: Time stamp being integrated towards when positivity was lost
    """

    def __init__(self, message, stamp):
        super().__init__(message)
        self.stamp = stamp
