from .config import ScenarioConfig, parse_scenario, resolve_config_text
from .trajectory import (GRID_PRESETS, Run, TrajectoryPhase, count_captures,
                         expand_preset, expand_scenario)
from .pipeline import run_pipeline

__all__ = [
    "GRID_PRESETS",
    "Run",
    "ScenarioConfig",
    "TrajectoryPhase",
    "count_captures",
    "expand_preset",
    "expand_scenario",
    "parse_scenario",
    "resolve_config_text",
    "run_pipeline",
]
