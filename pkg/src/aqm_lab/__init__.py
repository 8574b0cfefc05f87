"""Discrete-event dumbbell simulator comparing M-SQM with RED, RIO and PI."""

__version__ = "0.1.0"

from .config import RunConfig, parse_config, load_config
from .engine import build_dumbbell, simulate
from .metrics import MetricsRecord, write_csv
from .sweep import SweepSpec, run_once, run_sweep

__all__ = [
    "RunConfig",
    "parse_config",
    "load_config",
    "build_dumbbell",
    "simulate",
    "MetricsRecord",
    "write_csv",
    "SweepSpec",
    "run_once",
    "run_sweep",
]
