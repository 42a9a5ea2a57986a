"""Joint DOA and polarisation estimation with crossed-dipole and tripole vector-sensor arrays."""

from .array_model import ArrayGeometry, SensorKind, SourceParams, joint_steering, steering_matrix
from .crb import Scenario, crb_bounds, fisher_matrix
from .signal_sim import SimulationConfig, generate_snapshots, ideal_covariance, sample_covariance
from .subspace_music import GridConfig, Method, decompose, estimate

__all__ = [
    "ArrayGeometry",
    "SensorKind",
    "SourceParams",
    "joint_steering",
    "steering_matrix",
    "Scenario",
    "crb_bounds",
    "fisher_matrix",
    "SimulationConfig",
    "generate_snapshots",
    "ideal_covariance",
    "sample_covariance",
    "GridConfig",
    "Method",
    "decompose",
    "estimate",
]
