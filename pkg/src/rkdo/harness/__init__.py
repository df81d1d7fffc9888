"""Config-driven experiment runs and the ``rkdo`` command line."""

from .config import ConfigError, ExperimentConfig, format_config, load_config, parse_config
from .runs import (
    aggregate,
    make_fixture,
    run_compare,
    run_gradcheck,
    run_metrics,
    run_theorem,
    run_train,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "aggregate",
    "format_config",
    "load_config",
    "make_fixture",
    "parse_config",
    "run_compare",
    "run_gradcheck",
    "run_metrics",
    "run_theorem",
    "run_train",
]
