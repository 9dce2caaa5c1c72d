"""Desk-scale laboratory for continuum limits of transfer-operator tensor network states."""

from .exceptions import ConfigError, ConsistencyError, CpepsError, ResourceError, SingularityError
from .model import (BoundaryVectors, CouplingFields, LatticeSpec, ModeIndex, ModelSpec,
                    Statistics, load_config, momentum_grid, validate)

__version__ = "0.1.0"

__all__ = [
    "BoundaryVectors", "ConfigError", "ConsistencyError", "CouplingFields", "CpepsError",
    "LatticeSpec", "ModeIndex", "ModelSpec", "ResourceError", "SingularityError",
    "Statistics", "load_config", "momentum_grid", "validate",
]
