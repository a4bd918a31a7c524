"""Trajectory phases and experiment-grid expansion.

A Run is one continuous simulation: an indenter, its starting pose on the
gel, and an ordered phase list. Captures (depth/mesh/image artifacts) are
emitted at the end of every phase flagged capture=True. The three grid
presets expand into the full experiment matrices:

  slip      press 0.5 mm, then 1..5 mm slides, 2 directions, 4 shapes
  rotation  press 0.5 mm, then 5..45 degree turns, 2 senses, 3 shapes
  press     0..10 mm depths at a 3x3 location grid, 21 shapes

Slide direction is a heading angle in the sensor plane (0 = +x); rotation
direction is the sign of the magnitude-consuming angular speed, encoded in
`heading` as +1/-1.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from ..errors import ConfigurationError
from ..shapes import SHAPE_KINDS, Pose, ShapeSpec, shape_spec

PHASE_KINDS = ("press", "slide", "rotate", "dwell")

# paper experiment matrices: the sphere is excluded from rotation runs
# (rotating a sphere about its axis leaves no visible trace)
SLIP_SHAPES = ("sphere", "dot_in", "moon", "pacman")
ROTATION_SHAPES = ("dot_in", "moon", "pacman")
PRESS_SIZE_SCALES = (0.75, 1.0, 1.25)
PRESS_GRID_OFFSETS = (-3.0, 0.0, 3.0)

DEFAULT_SPEEDS = {"press": 20.0, "slide": 40.0, "rotate": 360.0}


@dataclass(frozen=True)
class TrajectoryPhase:
    """One motion segment: kind, magnitude (mm, degrees, or seconds for
    dwell), speed (mm/s or deg/s), and whether to capture at its end."""

    kind: str
    magnitude: float
    speed: float = 0.0
    capture: bool = False
    heading: float = 0.0       # slide: heading degrees; rotate: +/-1 sense
    label: str | None = None   # magnitude tag in artifact names

    def __post_init__(self):
        if self.kind not in PHASE_KINDS:
            raise ConfigurationError(
                f"unknown phase kind {self.kind!r}; expected one of "
                + ", ".join(PHASE_KINDS))
        if self.magnitude < 0:
            raise ConfigurationError(
                f"{self.kind} magnitude must be >= 0, got {self.magnitude}")
        if self.kind != "dwell" and self.speed <= 0:
            raise ConfigurationError(
                f"{self.kind} speed must be > 0, got {self.speed}")


@dataclass(frozen=True)
class Run:
    """One simulation: shape, start pose, ordered phases."""

    preset: str
    shape_label: str
    shape: ShapeSpec
    pose: Pose
    phases: tuple = field(default_factory=tuple)

    @property
    def captures(self) -> list[tuple[int, TrajectoryPhase]]:
        return [(i, p) for i, p in enumerate(self.phases) if p.capture]


def count_captures(runs: list[Run]) -> int:
    return sum(len(r.captures) for r in runs)


def _fmt_mag(value: float, unit: str) -> str:
    return f"{value:g}{unit}"


def _scaled_shape(kind: str, scale: float) -> ShapeSpec:
    base = shape_spec(kind)
    dims = {k: v * scale for k, v in base.dimensions.items()}
    return ShapeSpec(kind=kind, dimensions=dims,
                     edge_round_radius=base.edge_round_radius * scale)


def _press_phase(depth: float, speed: float, capture: bool = False,
                 label: str | None = None) -> TrajectoryPhase:
    return TrajectoryPhase("press", depth, speed, capture=capture, label=label)


def _expand_slip(speeds: dict) -> list[Run]:
    runs = []
    for kind in SLIP_SHAPES:
        for heading, tag in ((180.0, "left"), (0.0, "right")):
            phases = [_press_phase(0.5, speeds["press"], capture=True,
                                   label="0mm")]
            for dist in range(1, 6):
                phases.append(TrajectoryPhase(
                    "slide", 1.0, speeds["slide"], capture=True,
                    heading=heading, label=_fmt_mag(dist, "mm")))
            runs.append(Run("slip", f"{kind}_{tag}", shape_spec(kind),
                            Pose(), tuple(phases)))
    return runs


def _expand_rotation(speeds: dict) -> list[Run]:
    runs = []
    for kind in ROTATION_SHAPES:
        for sense, tag in ((-1.0, "cw"), (1.0, "ccw")):
            phases = [_press_phase(0.5, speeds["press"], capture=True,
                                   label="0deg")]
            for angle in range(5, 50, 5):
                phases.append(TrajectoryPhase(
                    "rotate", 5.0, speeds["rotate"], capture=True,
                    heading=sense, label=_fmt_mag(angle, "deg")))
            runs.append(Run("rotation", f"{kind}_{tag}", shape_spec(kind),
                            Pose(), tuple(phases)))
    return runs


def _expand_press(speeds: dict) -> list[Run]:
    runs = []
    for kind in SHAPE_KINDS:
        for scale in PRESS_SIZE_SCALES:
            shape = _scaled_shape(kind, scale)
            stag = f"s{int(round(scale * 100)):03d}"
            for row, oy in enumerate(PRESS_GRID_OFFSETS):
                for col, ox in enumerate(PRESS_GRID_OFFSETS):
                    phases = [TrajectoryPhase("dwell", 0.0, capture=True,
                                              label="0mm")]
                    for depth in range(1, 11):
                        phases.append(_press_phase(
                            1.0, speeds["press"], capture=True,
                            label=_fmt_mag(depth, "mm")))
                    runs.append(Run(
                        "press", f"{kind}_{stag}_r{row}c{col}", shape,
                        Pose(translation=(ox, oy, 0.0)), tuple(phases)))
    return runs


GRID_PRESETS = {
    "slip": _expand_slip,
    "rotation": _expand_rotation,
    "press": _expand_press,
}


def expand_preset(name: str, speeds: dict | None = None) -> list[Run]:
    """Expand a named experiment grid into its runs."""
    if name not in GRID_PRESETS:
        raise ConfigurationError(
            f"unknown trajectory preset {name!r}; available: "
            + ", ".join(sorted(GRID_PRESETS)))
    merged = dict(DEFAULT_SPEEDS)
    merged.update(speeds or {})
    runs = GRID_PRESETS[name](merged)
    if count_captures(runs) == 0:
        raise ConfigurationError(f"preset {name!r} expanded to zero captures")
    return runs


def _auto_labels(phases: list[TrajectoryPhase]) -> list[TrajectoryPhase]:
    """Fill missing labels with the cumulative magnitude of each kind."""
    units = {"press": "mm", "slide": "mm", "rotate": "deg", "dwell": "s"}
    totals = dict.fromkeys(PHASE_KINDS, 0.0)
    out = []
    for phase in phases:
        totals[phase.kind] += phase.magnitude
        if phase.label is None:
            phase = replace(phase, label=_fmt_mag(totals[phase.kind],
                                                  units[phase.kind]))
        out.append(phase)
    return out


def expand_scenario(cfg) -> list[Run]:
    """Expand a parsed ScenarioConfig into runs (grid preset or single run)."""
    if cfg.trajectory_preset is not None:
        return expand_preset(cfg.trajectory_preset, cfg.speeds)
    if not cfg.phases:
        raise ConfigurationError(
            "scenario defines neither a trajectory preset nor phases")
    phases = _auto_labels(list(cfg.phases))
    if not any(p.capture for p in phases):
        raise ConfigurationError("trajectory has no capture points")
    label = cfg.shape.kind
    run = Run(cfg.name, label, cfg.shape,
              Pose(translation=(cfg.offset[0], cfg.offset[1], 0.0),
                   rotation=cfg.shape_rotation),
              tuple(phases))
    return [run]
