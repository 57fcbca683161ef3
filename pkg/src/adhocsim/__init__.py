"""Deterministic ad hoc network simulator (AODV, DSR, FSR over CSMA/CA with
waypoint and highway mobility) and highway connectivity analytics."""

from .engine import Engine, RngStream, SchedulingError
from .scenario import ConfigError, ResultRow, ScenarioConfig, run_scenario, simulate
from .sweep import SweepSpec, run_sweep

__all__ = [
    "Engine", "RngStream", "SchedulingError",
    "ConfigError", "ResultRow", "ScenarioConfig", "run_scenario", "simulate",
    "SweepSpec", "run_sweep",
]

__version__ = "0.1.0"
