"""Finite-volume reference solvers for the parametric equation families."""

from .kernels import BACKEND, backends
from .models import FluxModel, H_FLOOR
from .solver import BLOWUP_THRESHOLD, SolverConfig, max_wave_speed, solve, step

__all__ = [
    "BACKEND",
    "BLOWUP_THRESHOLD",
    "FluxModel",
    "H_FLOOR",
    "SolverConfig",
    "backends",
    "max_wave_speed",
    "solve",
    "step",
]
