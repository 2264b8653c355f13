"""Experiment runner: configuration schema, presets and the ``otoclab`` command."""
from .config import (ConfigError, Diagnostic, KINDS, SCHEMA_VERSION, load_config, resolve_config,
                     validate_config)
from .experiments import Outcome, run_experiment
from .main import list_presets, main, preset_path, run, validate

__all__ = [
    "ConfigError",
    "Diagnostic",
    "KINDS",
    "SCHEMA_VERSION",
    "Outcome",
    "load_config",
    "resolve_config",
    "validate_config",
    "run_experiment",
    "list_presets",
    "main",
    "preset_path",
    "run",
    "validate",
]
