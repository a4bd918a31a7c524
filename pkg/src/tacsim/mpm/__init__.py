"""Improved Material Point Method elastomer solver."""
from .snapshot import load_snapshot, save_snapshot
from .solver import Simulation, StepStats
from .types import (ELASTOMER, OBJECT, KinematicCommand, MaterialParams,
                    ParticleState, RestMonitor, SimConfig, measure_progress,
                    merge_states, select_probes)

__all__ = [
    "ELASTOMER", "OBJECT", "KinematicCommand", "MaterialParams",
    "ParticleState", "RestMonitor", "SimConfig", "Simulation", "StepStats",
    "measure_progress", "merge_states", "select_probes",
    "load_snapshot", "save_snapshot",
]
