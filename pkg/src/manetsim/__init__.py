"""Deterministic discrete-event simulator for MANET routing protocol comparison."""

from .engine import Simulator
from .metrics import (MetricsReport, compute_avg_delay, compute_nrl, compute_pdf,
                      compute_throughput)
from .scenario import ScenarioConfig, parse_config, run_scenario
from .sweep import SweepSpec, run_sweep

__version__ = "0.1.0"

__all__ = [
    "Simulator", "ScenarioConfig", "SweepSpec", "MetricsReport",
    "parse_config", "run_scenario", "run_sweep",
    "compute_pdf", "compute_avg_delay", "compute_nrl", "compute_throughput",
]
