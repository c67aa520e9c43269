"""Experiment configuration, sweeps, and self-verification."""

from __future__ import annotations

from .experiment import ExperimentConfig, run_experiment, step_size_search, sweep_fixed_point
from .schedules import STANDARD_SCHEDULES, Schedule, parse_schedule
from .verify import CRITERIA, SUITES, VerifyReport, run_check, verify

__all__ = [
    "CRITERIA",
    "ExperimentConfig",
    "STANDARD_SCHEDULES",
    "SUITES",
    "Schedule",
    "VerifyReport",
    "parse_schedule",
    "run_check",
    "run_experiment",
    "step_size_search",
    "sweep_fixed_point",
    "verify",
]
