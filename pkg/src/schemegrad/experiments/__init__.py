"""Experiment suite: coefficient recovery, ODE/PDE fitting, compositional
generalization, and the batch-amortization benchmark."""

from .registry import (
    ALL_EQUATIONS,
    BENCH_PROGRAMS,
    COMPOSITION_CHAINS,
    COMPOSITION_OPS,
    FEYNMAN,
    FEYNMAN_ORDER,
    handcoded_oracle,
)
from .report import ResultRow, emit_report, parse_csv, rows_passed, write_reports
from .runner import EXPERIMENT_IDS, ExperimentSpec, load_spec, run_all, run_experiment

__all__ = [
    "ALL_EQUATIONS",
    "BENCH_PROGRAMS",
    "COMPOSITION_CHAINS",
    "COMPOSITION_OPS",
    "EXPERIMENT_IDS",
    "ExperimentSpec",
    "FEYNMAN",
    "FEYNMAN_ORDER",
    "ResultRow",
    "emit_report",
    "handcoded_oracle",
    "load_spec",
    "parse_csv",
    "rows_passed",
    "run_all",
    "run_experiment",
    "write_reports",
]
