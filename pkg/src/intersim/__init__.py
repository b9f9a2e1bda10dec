"""Trust-aware coordination of connected automated vehicles at a
signal-free intersection, with Sybil-attack detection and mitigation."""

from .config import ConfigError, load_config, parse_config
from .engine import Simulation, run_scenario, run_sweep

__all__ = ["ConfigError", "load_config", "parse_config", "Simulation",
           "run_scenario", "run_sweep"]

__version__ = "1.0.0"
