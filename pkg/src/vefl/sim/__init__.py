"""Simulation harness: configuration, round loop, exports and the command line."""

from .config import ConfigError, RunConfig, load_config
from .harness import RoundRecord, Scenario, build_scenario, run_baseline_fedprox, run_simulation

__all__ = ["ConfigError", "RunConfig", "load_config", "RoundRecord", "Scenario", "build_scenario",
           "run_simulation", "run_baseline_fedprox"]
