"""Shift-invert imaginary-time evolution for excited eigenstates of spin chains."""

from __future__ import annotations

from .engine import RunConfig, TrajectoryRecord, run_ensemble, run_trajectory
from .errors import (
    ConfigError,
    InvalidSpecError,
    NearDegeneracyError,
    ResourceLimitError,
    SiiteError,
    SiteFailure,
)
from .estimator import SIITE
from .models import HamiltonianSpec, OperatorTerms, build

__all__ = [
    "ConfigError",
    "HamiltonianSpec",
    "InvalidSpecError",
    "NearDegeneracyError",
    "OperatorTerms",
    "ResourceLimitError",
    "RunConfig",
    "SIITE",
    "SiiteError",
    "SiteFailure",
    "TrajectoryRecord",
    "build",
    "run_ensemble",
    "run_trajectory",
]

__version__ = "0.1.0"
