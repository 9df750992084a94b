"""Multi-domain secure multipath routing simulator for wireless sensor networks."""

from .config import ALL_POLICIES, CodingParams, ConfigError, RoutingPolicy, ScenarioConfig
from .engine import MetricsReport, compute_metrics, run_simulation, simulate_run
from .sweep import SweepSpec, emit_csv, emit_plotdata, run_sweep

__all__ = [
    "ALL_POLICIES",
    "CodingParams",
    "ConfigError",
    "MetricsReport",
    "RoutingPolicy",
    "ScenarioConfig",
    "SweepSpec",
    "compute_metrics",
    "emit_csv",
    "emit_plotdata",
    "run_simulation",
    "run_sweep",
    "simulate_run",
]

__version__ = "0.1.0"
