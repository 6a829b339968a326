"""Lagrangian (trajectory) formulation of quantum hydrodynamics on labelled particle grids."""
from .errors import (BoundaryLeakageWarning, ConfigurationError, InadmissibleError,
                     MeshTanglingError, NumericError, QHydroError, UnsupportedTransformError)
from .forces import PotentialSpec
from .integrator import InitialData, IntegrationConfig, RunResult, initialize, run
from .kinematics import EulerianField, FlowState
from .lattice import LabelGrid, make_grid

__version__ = "0.1.0"

__all__ = [
    "BoundaryLeakageWarning", "ConfigurationError", "InadmissibleError", "MeshTanglingError",
    "NumericError", "QHydroError", "UnsupportedTransformError", "PotentialSpec", "InitialData",
    "IntegrationConfig", "RunResult", "initialize", "run", "EulerianField", "FlowState",
    "LabelGrid", "make_grid", "__version__",
]
