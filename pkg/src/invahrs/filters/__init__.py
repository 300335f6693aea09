"""Attitude filter bank; see :mod:`invahrs.filters.core`."""

from .core import (
    ALL_KINDS,
    FilterKind,
    FilterRun,
    FilterState,
    NcfGains,
    StepOutput,
    build_bank,
    clone,
    init,
    run_filter,
    step,
    step_ekf,
    step_liekf_star,
    step_ncf,
    step_riekf_star,
    step_rincf,
    step_rincf2,
    step_wab,
)
from .wahba import wahba_svd

__all__ = [
    "ALL_KINDS",
    "FilterKind",
    "FilterRun",
    "FilterState",
    "NcfGains",
    "StepOutput",
    "build_bank",
    "clone",
    "init",
    "run_filter",
    "step",
    "step_ekf",
    "step_liekf_star",
    "step_ncf",
    "step_riekf_star",
    "step_rincf",
    "step_rincf2",
    "step_wab",
    "wahba_svd",
]
