"""Pseudospectral Schroedinger-Langevin and quantum drift-diffusion lab on the 2D torus."""

from .errors import (
    DegenerateData,
    FormatError,
    HorizonTooShort,
    NoContraction,
    NonZeroCirculation,
    NonZeroMeanRhs,
    NotIrrotational,
    ParseError,
    QHDError,
    VacuumBreach,
    ValidationError,
)
from .madelung import HydroState, PressureLaw, WaveFunction
from .qdd_solver import QDDParams, run_qdd
from .sl_solver import SLParams, run_sl
from .spectral import TorusGrid

__version__ = "0.1.0"

__all__ = [
    "DegenerateData",
    "FormatError",
    "HorizonTooShort",
    "NoContraction",
    "NonZeroCirculation",
    "NonZeroMeanRhs",
    "NotIrrotational",
    "ParseError",
    "QHDError",
    "VacuumBreach",
    "ValidationError",
    "HydroState",
    "PressureLaw",
    "WaveFunction",
    "QDDParams",
    "run_qdd",
    "SLParams",
    "run_sl",
    "TorusGrid",
]
