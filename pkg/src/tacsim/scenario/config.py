"""Scenario configuration: INI-style files with strict validation.

A scenario file has up to six sections; every key is checked against the
schema and unknown keys are rejected with the file, section, and key named
in the diagnostic. The [scenario] `preset` key either names an experiment
grid (slip, rotation, press) or a named single-run scenario whose values
are materialized as defaults and may be overridden by the file.

Example::

    [scenario]
    preset = gelsight-press-sphere
    output_dir = out
    seed = 0

Trajectory phases are ordered keys in the [trajectory] section::

    [trajectory]
    phase1 = press 1.0 capture
    phase2 = slide 2.0 heading=180 capture speed=40
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

from ..errors import ConfigurationError
from ..render.scene import get_profile
from ..shapes import _DIM_DEFAULTS, ShapeSpec, shape_spec
from .trajectory import GRID_PRESETS, TrajectoryPhase

SCALES = ("desk", "paper")
RENDERERS = ("path", "phong", "both")

_DEFAULTS = {
    "scenario": {
        "name": "",
        "preset": "",
        "profile": "gelsight-desk",
        "output_dir": "out",
        "seed": "0",
        "scale": "desk",
        "renderer": "path",
    },
    "shape": {
        "kind": "",
        "rotation": "0",
        "offset_x": "0",
        "offset_y": "0",
        "edge_round_radius": "",
    },
    "simulation": {
        "dt": "",
        "rest_threshold": "",
        "rest_limit": "",
        "pin_fraction": "",
        "boundary_margin": "",
        "improved": "true",
        "press_speed": "20",
        "slide_speed": "40",
        "rotate_speed": "360",
        "settle_time": "0.02",
        "clearance": "0.4",
    },
    "surface": {"perturb_amplitude": "1e-4"},
    "render": {"spp": "", "max_bounces": "4", "texture": ""},
}

_SIM_OVERRIDE_KEYS = ("dt", "rest_threshold", "rest_limit", "pin_fraction",
                      "boundary_margin")

SCENARIO_PRESETS = {
    "gelsight-press-sphere": {
        "scenario": {"name": "press-sphere", "profile": "gelsight-desk"},
        "shape": {"kind": "sphere"},
        "trajectory": {"phase1": "press 1.0 capture"},
    },
    "slip-dot_in-2mm": {
        "scenario": {"name": "slip-dot_in", "profile": "slip-sensor-desk"},
        "shape": {"kind": "dot_in"},
        "trajectory": {"phase1": "press 0.5",
                       "phase2": "slide 2.0 heading=180 capture"},
    },
    "rotation-dot_in-45deg": {
        "scenario": {"name": "rotation-dot_in", "profile": "slip-sensor-desk"},
        "shape": {"kind": "dot_in"},
        "trajectory": {"phase1": "press 0.5",
                       "phase2": "rotate 45 heading=-1 capture"},
    },
}


@dataclass
class ScenarioConfig:
    name: str
    trajectory_preset: str | None
    profile: str
    output_dir: Path
    seed: int
    scale: str
    renderer: str
    shape: ShapeSpec | None
    offset: tuple[float, float]
    shape_rotation: float
    improved: bool
    sim_overrides: dict
    speeds: dict
    settle_time: float
    clearance: float
    perturb_amplitude: float
    spp: int | None
    max_bounces: int
    texture: Path | None
    phases: tuple
    resolved: dict  # canonical section -> key -> value view for hashing


def _err(where: str, message: str) -> ConfigurationError:
    return ConfigurationError(f"{where}: {message}")


def _parse_float(where: str, key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise _err(where, f"key {key!r} expects a number, got {raw!r}") from None


def _parse_int(where: str, key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise _err(where, f"key {key!r} expects an integer, got {raw!r}") from None


def _parse_bool(where: str, key: str, raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise _err(where, f"key {key!r} expects a boolean, got {raw!r}")


def _parse_phase(where: str, key: str, text: str, speeds: dict) -> TrajectoryPhase:
    tokens = text.split()
    if len(tokens) < 2:
        raise _err(where, f"phase {key!r} needs '<kind> <magnitude> ...', "
                          f"got {text!r}")
    kind = tokens[0]
    magnitude = _parse_float(where, key, tokens[1])
    fields = {"capture": False, "heading": 0.0,
              "speed": speeds.get(kind, 0.0), "label": None}
    for token in tokens[2:]:
        if token == "capture":
            fields["capture"] = True
            continue
        if "=" not in token:
            raise _err(where, f"phase {key!r}: bad token {token!r}")
        opt, _, raw = token.partition("=")
        if opt == "speed":
            fields["speed"] = _parse_float(where, key, raw)
        elif opt == "heading":
            fields["heading"] = _parse_float(where, key, raw)
        elif opt == "capture":
            fields["capture"] = _parse_bool(where, key, raw)
        elif opt == "label":
            fields["label"] = raw
        else:
            raise _err(where, f"phase {key!r}: unknown option {opt!r}")
    try:
        return TrajectoryPhase(kind, magnitude, **fields)
    except ConfigurationError as exc:
        raise _err(where, f"phase {key!r}: {exc}") from None


def _merge_preset(merged: dict, preset_name: str, where: str) -> str | None:
    """Fold a named preset into the defaults; returns a grid preset name."""
    if not preset_name:
        return None
    if preset_name in GRID_PRESETS:
        return preset_name
    if preset_name not in SCENARIO_PRESETS:
        available = sorted(list(GRID_PRESETS) + list(SCENARIO_PRESETS))
        raise _err(where, f"unknown preset {preset_name!r}; available: "
                          + ", ".join(available))
    for section, values in SCENARIO_PRESETS[preset_name].items():
        merged.setdefault(section, {}).update(values)
    return None


def parse_scenario(path) -> ScenarioConfig:
    """Parse and fully validate a scenario file."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"scenario file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                       inline_comment_prefixes=(";", "#"))
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except (configparser.Error, UnicodeDecodeError) as exc:
        raise ConfigurationError(f"{path}: {exc}") from None

    known_sections = set(_DEFAULTS) | {"trajectory"}
    for section in parser.sections():
        if section not in known_sections:
            raise _err(str(path), f"unknown section [{section}]")

    user = {s: dict(parser.items(s)) for s in parser.sections()}
    where = str(path)

    merged = {s: dict(v) for s, v in _DEFAULTS.items()}
    merged["trajectory"] = {}
    preset_name = user.get("scenario", {}).get("preset", "").strip()
    grid_preset = _merge_preset(merged, preset_name, where)
    for section, values in user.items():
        merged[section].update(values)

    # key validation (trajectory keys are free-form ordered phase names)
    for section in _DEFAULTS:
        for key in merged[section]:
            if section == "shape" and key not in _DEFAULTS["shape"]:
                continue  # shape dimensions validated against the kind below
            if key not in _DEFAULTS[section]:
                raise _err(where, f"[{section}] unknown key {key!r}")

    scn = merged["scenario"]
    seed = _parse_int(where, "seed", scn["seed"])
    if seed < 0:
        raise _err(where, "key 'seed' must be >= 0")
    scale = scn["scale"].strip().lower()
    if scale not in SCALES:
        raise _err(where, f"key 'scale' must be one of {SCALES}, "
                          f"got {scn['scale']!r}")
    renderer = scn["renderer"].strip().lower()
    if renderer not in RENDERERS:
        raise _err(where, f"key 'renderer' must be one of {RENDERERS}, "
                          f"got {scn['renderer']!r}")
    profile = scn["profile"].strip()
    get_profile(profile)  # unknown profile -> error listing available ones

    sim = merged["simulation"]
    speeds = {k: _parse_float(where, f"{k}_speed", sim[f"{k}_speed"])
              for k in ("press", "slide", "rotate")}
    for kind, value in speeds.items():
        if value <= 0:
            raise _err(where, f"key '{kind}_speed' must be > 0, got {value}")
    settle_time = _parse_float(where, "settle_time", sim["settle_time"])
    if settle_time < 0:
        raise _err(where, "key 'settle_time' must be >= 0")
    clearance = _parse_float(where, "clearance", sim["clearance"])
    if clearance <= 0:
        raise _err(where, "key 'clearance' must be > 0")
    improved = _parse_bool(where, "improved", sim["improved"])
    sim_overrides = {}
    for key in _SIM_OVERRIDE_KEYS:
        raw = sim[key].strip()
        if not raw:
            continue
        if key in ("rest_limit", "boundary_margin"):
            sim_overrides[key] = _parse_int(where, key, raw)
        else:
            sim_overrides[key] = _parse_float(where, key, raw)

    shp = merged["shape"]
    shape = None
    shape_rotation = _parse_float(where, "rotation", shp["rotation"])
    offset = (_parse_float(where, "offset_x", shp["offset_x"]),
              _parse_float(where, "offset_y", shp["offset_y"]))
    kind = shp["kind"].strip()
    if kind:
        if kind not in _DIM_DEFAULTS:
            raise _err(where, f"[shape] unknown kind {kind!r}; available: "
                              + ", ".join(sorted(_DIM_DEFAULTS)))
        dims = {}
        for key, raw in shp.items():
            if key in _DEFAULTS["shape"]:
                continue
            if key not in _DIM_DEFAULTS[kind]:
                raise _err(where, f"[shape] unknown key {key!r} for kind "
                                  f"{kind!r}")
            dims[key] = _parse_float(where, key, raw)
        rnd = shp["edge_round_radius"].strip()
        round_radius = _parse_float(where, "edge_round_radius", rnd) if rnd \
            else None
        try:
            shape = shape_spec(kind, edge_round_radius=round_radius, **dims)
        except ConfigurationError as exc:
            raise _err(where, f"[shape] {exc}") from None
    else:
        extra = [k for k in shp if k not in _DEFAULTS["shape"]]
        if extra:
            raise _err(where, f"[shape] dimensions {extra} given without a "
                              "'kind'")

    phases = tuple(_parse_phase(where, key, text, speeds)
                   for key, text in merged["trajectory"].items())

    if grid_preset is None and shape is None:
        raise _err(where, "scenario needs a preset or a [shape] kind")
    if grid_preset is not None and (kind or phases):
        raise _err(where, f"grid preset {grid_preset!r} does not take "
                          "[shape] or [trajectory] sections")
    if grid_preset is None and not phases:
        raise _err(where, "[trajectory] section defines no phases")

    srf = merged["surface"]
    perturb = _parse_float(where, "perturb_amplitude",
                           srf["perturb_amplitude"])
    if perturb < 0:
        raise _err(where, "key 'perturb_amplitude' must be >= 0")

    rnd = merged["render"]
    spp_raw = rnd["spp"].strip()
    spp = _parse_int(where, "spp", spp_raw) if spp_raw else None
    if spp is not None and spp < 1:
        raise _err(where, "key 'spp' must be >= 1")
    max_bounces = _parse_int(where, "max_bounces", rnd["max_bounces"])
    if max_bounces < 1:
        raise _err(where, "key 'max_bounces' must be >= 1")
    texture = Path(rnd["texture"]) if rnd["texture"].strip() else None

    name = scn["name"].strip() or grid_preset or preset_name or \
        (shape.kind if shape else "scenario")

    merged["scenario"]["preset"] = preset_name
    return ScenarioConfig(
        name=name, trajectory_preset=grid_preset, profile=profile,
        output_dir=Path(scn["output_dir"]), seed=seed, scale=scale,
        renderer=renderer, shape=shape, offset=offset,
        shape_rotation=shape_rotation, improved=improved,
        sim_overrides=sim_overrides, speeds=speeds, settle_time=settle_time,
        clearance=clearance, perturb_amplitude=perturb, spp=spp,
        max_bounces=max_bounces, texture=texture, phases=phases,
        resolved=merged)


def resolve_config_text(cfg: ScenarioConfig) -> str:
    """Canonical text of the fully resolved config, used for hashing."""
    lines = []
    for section in sorted(cfg.resolved):
        for key in sorted(cfg.resolved[section]):
            lines.append(f"{section}.{key}={cfg.resolved[section][key]}")
    return "\n".join(lines) + "\n"
