"""Scenario configuration, execution and artifact output."""

from .config import SCENARIOS, ScenarioConfig, parse_config
from .io import csv_bytes, emit_plot, write_csv
from .report import Check, RunReport
from .runner import compute_scenario, run_scenario

__all__ = ["SCENARIOS", "ScenarioConfig", "parse_config", "csv_bytes", "emit_plot", "write_csv",
           "Check", "RunReport", "compute_scenario", "run_scenario"]
