"""Simulation study and solver benchmark."""
from .sim import (
    CONFIGS, SimData, SimProtocol, VarianceConfig, get_config, separable_counterpart, simulate_dataset,
    simulate_errors,
)
from .study import METHODS, MetricsTable, StudyAborted, run_study
from .bench import bench_inversion, format_bench, grid_shape, write_bench_csv

__all__ = [
    "CONFIGS", "METHODS", "MetricsTable", "SimData", "SimProtocol", "StudyAborted", "VarianceConfig",
    "bench_inversion", "format_bench", "get_config", "grid_shape", "run_study", "separable_counterpart",
    "simulate_dataset", "simulate_errors", "write_bench_csv",
]
