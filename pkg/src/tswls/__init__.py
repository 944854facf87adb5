"""Closed-form TSWLS 3D positioning for RIS-aided mmWave systems, with a
second-order bias predictor and Monte Carlo tooling."""

from .exceptions import ConvergenceError, DegenerateGeometryError, SingularSystemError, TSWLSError
from .geometry import Scenario, TrueParams, default_scenario, true_parameters
from .measurement import Measurements, NoiseModel, stacked_covariance, synthesize
from .estimator import EstimatorConfig, FinalEstimate, estimate
from .baseline import geometry_estimate

__all__ = [
    "ConvergenceError",
    "DegenerateGeometryError",
    "EstimatorConfig",
    "FinalEstimate",
    "Measurements",
    "NoiseModel",
    "Scenario",
    "SingularSystemError",
    "TSWLSError",
    "TrueParams",
    "default_scenario",
    "estimate",
    "geometry_estimate",
    "stacked_covariance",
    "synthesize",
    "true_parameters",
]

__version__ = "0.1.0"
