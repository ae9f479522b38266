"""Experiment configuration, batch runner, plot output and command-line interface."""

from .config import EXPERIMENTS, ConfigError, ExperimentConfig, load_config, parse_config
from .runner import CSV_COLUMNS, SCHEMA_VERSION, ExperimentResult, emit_plots, run, write_outputs

__all__ = ["EXPERIMENTS", "ConfigError", "ExperimentConfig", "load_config", "parse_config",
           "CSV_COLUMNS", "SCHEMA_VERSION", "ExperimentResult", "emit_plots", "run",
           "write_outputs"]
