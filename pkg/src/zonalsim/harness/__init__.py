"""Experiment orchestration: configuration, runs, sweeps and reports."""

from .config import OUT_ENV, TOPOLOGIES, ExperimentConfig, default_out_root, load_config, parse_rates
from .report import emit_report
from .run import RunResult, SweepResult, load_result, run_single, run_sweep, write_result

__all__ = [
    "OUT_ENV",
    "TOPOLOGIES",
    "ExperimentConfig",
    "RunResult",
    "SweepResult",
    "default_out_root",
    "emit_report",
    "load_config",
    "load_result",
    "parse_rates",
    "run_single",
    "run_sweep",
    "write_result",
]
