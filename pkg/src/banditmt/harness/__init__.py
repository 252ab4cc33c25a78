"""Experiment harness: configuration, Monte Carlo replication, validity
oracles, metrics aggregation and the command-line interface."""

from .config import EnvironmentSpec, ExperimentConfig, MethodSpec, StoppingSpec, load_config
from .experiments import (
    CSV_COLUMNS,
    MetricsTable,
    TrialRecord,
    graph_experiment,
    run_experiment,
    run_trial_record,
    time_to_target,
)
from .validity import CheckResult, run_validity_suite

__all__ = [
    "EnvironmentSpec",
    "ExperimentConfig",
    "MethodSpec",
    "StoppingSpec",
    "load_config",
    "CSV_COLUMNS",
    "MetricsTable",
    "TrialRecord",
    "graph_experiment",
    "run_experiment",
    "run_trial_record",
    "time_to_target",
    "CheckResult",
    "run_validity_suite",
]
