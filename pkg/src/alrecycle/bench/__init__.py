"""Planar Kelvin-Helmholtz benchmark driver."""

from .config import ConfigError, KhConfig, gamma_for_level, load_config, parse_config
from .kh import (
    FieldSnapshot,
    KhRunFailure,
    compute_vorticity,
    emit_outputs,
    initial_condition,
    kinetic_energy,
    read_stats,
    run_simulation,
)

__all__ = [
    "ConfigError", "FieldSnapshot", "KhConfig", "KhRunFailure", "compute_vorticity",
    "emit_outputs", "gamma_for_level", "initial_condition", "kinetic_energy", "load_config",
    "parse_config", "read_stats", "run_simulation",
]
