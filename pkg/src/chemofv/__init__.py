"""Finite-volume simulator and verification harness for a regularized
chemotaxis-consumption system with signal-dependent motility."""

from .dynamics import PhysParams, SolverConfig, State, homogeneous_oracle, run, stable_dt, step
from .grid import Field, Grid, integrate, linf_norm, lp_norm
from .motility import CustomMotility, PowerLaw, check_hypotheses

__version__ = "1.0.0"

__all__ = [
    "CustomMotility",
    "Field",
    "Grid",
    "PhysParams",
    "PowerLaw",
    "SolverConfig",
    "State",
    "check_hypotheses",
    "homogeneous_oracle",
    "integrate",
    "linf_norm",
    "lp_norm",
    "run",
    "stable_dt",
    "step",
]
