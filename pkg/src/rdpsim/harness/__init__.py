"""Experiment orchestration and the command-line interface."""

from .experiment import ConfigError, emit_plotdata, load_config, run_experiment

__all__ = ["ConfigError", "emit_plotdata", "load_config", "run_experiment"]
