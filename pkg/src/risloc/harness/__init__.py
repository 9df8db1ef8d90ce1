"""Configuration, Monte Carlo campaigns and the command-line interface."""

from .campaign import Campaign, PebRow, ResultRow, run_distance_sweep, run_ris_size_sweep, trial_rng, write_csv
from .config import ConfigError, ExperimentConfig

__all__ = [
    "Campaign", "ConfigError", "ExperimentConfig", "PebRow", "ResultRow",
    "run_distance_sweep", "run_ris_size_sweep", "trial_rng", "write_csv",
]
