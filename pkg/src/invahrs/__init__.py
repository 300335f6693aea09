"""Invariant attitude filters with Riccati-based gain tuning."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .filters import FilterKind, NcfGains, build_bank, init, run_filter, step
from .models import AttState, ImuSample, NoiseConfig
from .riccati import GainMatrix, solve_dare, tune
from .sim import SimRun, TrajectoryCase, simulate

__all__ = [
    "BACKEND",
    "AttState",
    "FilterKind",
    "GainMatrix",
    "ImuSample",
    "NcfGains",
    "NoiseConfig",
    "SimRun",
    "TrajectoryCase",
    "build_bank",
    "init",
    "run_filter",
    "simulate",
    "solve_dare",
    "step",
    "tune",
    "__version__",
]
