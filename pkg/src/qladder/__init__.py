"""Exact numerics for rainbow scars in disordered XY qubit ladders."""

from .core import LadderSpec, SectorBasis, SectorError, SparseOperator, StateVector
from .hamiltonian import CouplingConfig, PerturbationConfig, Range2Config, build_experimental, build_ideal, build_range2
from .kernels import backend

__version__ = "0.1.0"

__all__ = [
    "CouplingConfig",
    "LadderSpec",
    "PerturbationConfig",
    "Range2Config",
    "SectorBasis",
    "SectorError",
    "SparseOperator",
    "StateVector",
    "backend",
    "build_experimental",
    "build_ideal",
    "build_range2",
]
