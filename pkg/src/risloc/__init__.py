"""Localization and synchronization with a reconfigurable intelligent surface.

Submodules:

- ``geometry``: RIS layout, wavenumbers and steering vectors
- ``channel``: OFDM observation model and synthetic data
- ``fim``: Fisher information and Cramer-Rao bounds
- ``numopt``: the small optimizers used by the estimator
- ``estimator``: the four-stage position and clock-bias estimator
- ``harness``: configs, Monte Carlo sweeps and the CLI
"""

from .channel import PhaseProfileSet, ScenarioConfig, random_profiles, synthesize
from .estimator import EstimatorConfig, estimate
from .fim import CrbReport, SingularFimError, crb
from .geometry import Angles, RisGeometry

__version__ = "0.1.0"

__all__ = [
    "Angles", "CrbReport", "EstimatorConfig", "PhaseProfileSet", "RisGeometry", "ScenarioConfig",
    "SingularFimError", "crb", "estimate", "random_profiles", "synthesize",
]
