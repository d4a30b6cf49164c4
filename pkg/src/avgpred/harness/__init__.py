"""Scenario files, experiment runners and the command-line interface."""

from .runner import (compare_controllers, certify_scenario, run, run_scenario, sweep,
                     sweep_csv)
from .scenario import Scenario, bundled_names, bundled_path, load_scenario, parse_scenario

__all__ = [
    "Scenario", "load_scenario", "parse_scenario", "bundled_names", "bundled_path",
    "run", "run_scenario", "compare_controllers", "sweep", "sweep_csv", "certify_scenario",
]
