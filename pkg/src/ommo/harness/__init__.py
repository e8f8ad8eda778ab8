"""Configuration, experiment orchestration and the command-line entry point."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .experiment import run_experiment, sweep
from .suites import SUITES, verify

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "run_experiment",
           "sweep", "SUITES", "verify"]
