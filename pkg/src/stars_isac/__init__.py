"""Simulator and multi-agent trainers for a target-mounted STARS ISAC vehicular link."""

from .config import HyperParams, load_config
from .env import StarsIsacEnv
from .harness import compare_modes, evaluate, run_training, sweep
from .kernels import BACKEND as KERNEL_BACKEND
from .scenario import ScenarioConfig

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND", "HyperParams", "ScenarioConfig", "StarsIsacEnv", "__version__",
    "compare_modes", "evaluate", "load_config", "run_training", "sweep",
]
