"""Signal-level simulator for wireless Map-Shuffle-Reduce with imperfect CSI."""

__version__ = "0.1.0"

from .analysis import empirical_ncl, ncl_cm, ncl_sp, ncl_timesharing, ncl_zf
from .model import ConfigError, SystemConfig, enumerate_subsets, validate_config
from .shuffle import Scheme, prepare_system, schedule

__all__ = [
    "ConfigError",
    "Scheme",
    "SystemConfig",
    "empirical_ncl",
    "enumerate_subsets",
    "ncl_cm",
    "ncl_sp",
    "ncl_timesharing",
    "ncl_zf",
    "prepare_system",
    "schedule",
    "validate_config",
]
