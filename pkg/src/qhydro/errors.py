"""Exception types shared across the package."""


class QHydroError(Exception):
    """Base class for all package errors."""


class ConfigurationError(QHydroError, ValueError):
    """Invalid grid, initial data, scenario or parameter choice."""


class NumericError(QHydroError, FloatingPointError):
    """Non-finite values encountered in a field."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class MeshTanglingError(QHydroError):
    """The label-to-position map lost invertibility (J <= 0)."""

    def __init__(self, message, node=None, time=None, min_jacobian=None):
        super().__init__(message)
        self.node = node
        self.time = time
        self.min_jacobian = min_jacobian


class InadmissibleError(QHydroError):
    """A requested symmetry or charge is not admitted by the potential/flow."""

    def __init__(self, message, constraint=None, residual=None):
        super().__init__(message)
        self.constraint = constraint
        self.residual = residual


class UnsupportedTransformError(QHydroError):
    """Finite transform requested outside the closed-form subgroup."""


class BoundaryLeakageWarning(UserWarning):
    """Field does not decay toward the edge of the grid."""
