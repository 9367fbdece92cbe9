"""Experiment runner: configs, Monte Carlo drivers and result emission."""
from .config import EXPERIMENTS, ExperimentConfig, load_config, make_config
from .experiments import run
from .output import ResultRow, emit, render

__all__ = ["EXPERIMENTS", "ExperimentConfig", "load_config", "make_config", "run", "ResultRow",
           "emit", "render"]
