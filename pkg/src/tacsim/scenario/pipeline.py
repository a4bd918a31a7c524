"""End-to-end scenario execution: world assembly, phase driving,
surface extraction, rendering, and artifact persistence.

Artifacts land under ``<output_dir>/<preset>/<shape>/`` with one
``<phase-index>_<magnitude>.{dpth,obj,png}`` triple per capture, plus a
``manifest.json`` at the output root listing every file with its content
hash, the resolved config hash, and the seed. Runs are deterministic:
the same config and seed produce bit-identical artifacts regardless of
thread count.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from ..errors import ConfigurationError, SimulationFault
from ..mpm.snapshot import save_snapshot
from ..mpm.solver import Simulation
from ..mpm.types import (KinematicCommand, MaterialParams, ParticleState,
                         SimConfig, merge_states)
from ..render.pathtrace import render_path_traced
from ..render.phong import render_phong
from ..render.scene import (build_scene, flat_texture, get_profile,
                            load_texture, save_png)
from ..shapes import Pose, elastomer_block, sample_particles, sdf_eval
from ..surface import (depth_to_mesh, extract_surface_depth, perturb_depth,
                       save_depth, save_obj)
from .config import ScenarioConfig, resolve_config_text
from .trajectory import Run, count_captures, expand_scenario

log = logging.getLogger(__name__)

GEL_EXTENT = (20.0, 20.0, 4.0)
SCALE_COUNTS = {"desk": (101, 101, 21), "paper": (201, 201, 41)}
INPLANE_PAD = 5.0   # mm of domain beyond the gel on every side
HEADROOM = 14.0     # mm of domain above the undeformed gel surface


@dataclass
class World:
    config: SimConfig
    gel: ParticleState
    center: np.ndarray     # gel center in the sensor plane
    top_z: float           # undeformed surface height
    spacing: float         # particle lattice step


def build_world(scale: str, sim_overrides: dict | None = None) -> World:
    """Desk- or paper-scale elastomer block inside its background grid."""
    counts = SCALE_COUNTS[scale]
    spacing = GEL_EXTENT[0] / (counts[0] - 1)
    width = 2.0 * spacing
    settings = dict(grid_width=width, dt=1e-4, boundary_margin=3,
                    rest_threshold=0.05, rest_limit=50, pin_fraction=0.5)
    settings.update(sim_overrides or {})
    margin = settings["boundary_margin"]

    # The gel floats clear of the sticky boundary band: its support comes
    # from the pinned bottom layers (the improved transfers), not from the
    # domain walls, so disabling the improvements exposes their effect.
    origin_z = (margin + 2) * width
    inplane = GEL_EXTENT[0] + 2.0 * INPLANE_PAD
    height = origin_z + GEL_EXTENT[2] + HEADROOM
    dims = (int(round(inplane / width)) + 1,
            int(round(inplane / width)) + 1,
            int(round(height / width)) + 1)
    config = SimConfig(grid_dims=dims, **settings)

    origin = np.array([INPLANE_PAD, INPLANE_PAD, origin_z])
    gel = elastomer_block(extent=GEL_EXTENT, counts=counts, origin=origin)
    center = origin[:2] + 0.5 * np.asarray(GEL_EXTENT[:2])
    return World(config=config, gel=gel, center=center,
                 top_z=origin_z + GEL_EXTENT[2], spacing=spacing)


def _local_bottom(shape, spacing: float) -> float:
    """Exact z of the shape's lowest surface point (local frame).

    The lowest lattice particle sits at most one spacing above the true
    surface; refine by root-finding the SDF on the vertical line below it.
    """
    probe = sample_particles(shape, Pose(), spacing)
    p = probe.x[np.argmin(probe.x[:, 2])]

    def f(dz: float) -> float:
        return sdf_eval(shape, (p[0], p[1], p[2] - dz))

    if f(0.0) >= 0.0:
        return float(p[2])
    hi = spacing
    while f(hi) <= 0.0:
        hi *= 2.0
        if hi > 8.0 * spacing:
            return float(p[2] - spacing)
    return float(p[2] - brentq(f, 0.0, hi, xtol=1e-12))


def place_indenter(run: Run, world: World,
                   clearance: float) -> tuple[ParticleState, np.ndarray]:
    """Sample the indenter so its lowest point hovers `clearance` above
    the gel. Returns the particle cloud and its center in the plane."""
    center = world.center + np.asarray(run.pose.translation[:2])
    bottom = _local_bottom(run.shape, world.spacing)
    lift = world.top_z + clearance - bottom
    pose = Pose(translation=(center[0], center[1], lift),
                rotation=run.pose.rotation)
    cloud = sample_particles(run.shape, pose, world.spacing)
    return cloud, center


def _derive_seed(base: int, run_label: str, capture: str, purpose: str) -> int:
    text = f"{base}:{run_label}:{capture}:{purpose}"
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:4], "little")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _capture_relpaths(run: Run, renderer: str,
                      with_images: bool) -> list[tuple[int, str, list[str]]]:
    """Expected artifact names per capture: (phase index, stem, files)."""
    out = []
    base = f"{run.preset}/{run.shape_label}"
    for idx, phase in run.captures:
        stem = f"{base}/{idx:02d}_{phase.label}"
        files = [f"{stem}.dpth"]
        if with_images:
            files.append(f"{stem}.obj")
            if renderer in ("path", "phong"):
                files.append(f"{stem}.png")
            else:  # both
                files.extend([f"{stem}.png", f"{stem}_phong.png"])
        out.append((idx, stem, files))
    return out


class _RunDriver:
    """Advances one run phase by phase, capturing artifacts."""

    def __init__(self, run: Run, cfg: ScenarioConfig, out_root: Path,
                 texture: np.ndarray, with_images: bool):
        self.run = run
        self.cfg = cfg
        self.out_root = out_root
        self.texture = texture
        self.with_images = with_images
        self.profile = get_profile(cfg.profile)
        self.world = build_world(cfg.scale, cfg.sim_overrides)
        cloud, self.indenter_center = place_indenter(run, self.world,
                                                     cfg.clearance)
        state = merge_states(self.world.gel, cloud)
        self.sim = Simulation(state, self.world.config, MaterialParams(),
                              improved=cfg.improved)
        self.pending_gap = cfg.clearance
        self.moved = False
        self.last_good: ParticleState | None = None
        self.files: dict[str, str] = {}
        self.step_stats = []

    def _object_center(self) -> np.ndarray:
        obj = self.sim.state.x[self.sim.state.object_mask()]
        return obj[:, :2].mean(axis=0)

    def _hold(self, seconds: float) -> None:
        steps = int(round(seconds / self.world.config.dt))
        command = KinematicCommand.translate((0.0, 0.0, 0.0))
        monitor = self.sim.new_monitor()
        for _ in range(steps):
            self.step_stats.append(self.sim.step(command, monitor))

    def _drive(self, phase) -> None:
        speed = phase.speed
        if phase.kind == "dwell":
            self._hold(phase.magnitude)
            return
        if phase.kind == "press":
            target = phase.magnitude + self.pending_gap
            self.pending_gap = 0.0
            command = KinematicCommand.translate((0.0, 0.0, -speed))
            monitor = self.sim.new_monitor()
            kwargs = {"target_distance": target}
        elif phase.kind == "slide":
            theta = np.radians(phase.heading)
            command = KinematicCommand.translate(
                (speed * np.cos(theta), speed * np.sin(theta), 0.0))
            monitor = self.sim.new_monitor()
            kwargs = {"target_distance": phase.magnitude}
        else:  # rotate
            sense = -1.0 if phase.heading < 0 else 1.0
            cx, cy = self._object_center()
            command = KinematicCommand.rotate(
                (cx, cy, 0.0), sense * np.radians(speed))
            monitor = self.sim.new_monitor(rotation_center=(cx, cy))
            kwargs = {"target_angle": phase.magnitude}
        if phase.magnitude > 0.0 or self.pending_gap > 0.0:
            self.step_stats.extend(
                self.sim.run_phase(command, monitor, **kwargs))
            self.moved = True

    def _capture(self, stem: str, files: list[str]) -> None:
        if self.moved and self.cfg.settle_time > 0:
            self._hold(self.cfg.settle_time)
        profile = self.profile
        depth = extract_surface_depth(
            self.sim.state, resolution=profile.resolution,
            pitch=profile.pixel_pitch, center=self.world.center,
            rest_height=self.world.top_z)
        if self.cfg.perturb_amplitude > 0:
            depth = perturb_depth(depth, self.cfg.perturb_amplitude,
                                  _derive_seed(self.cfg.seed,
                                               self.run.shape_label,
                                               stem, "perturb"))
        save_depth(depth, self.out_root / f"{stem}.dpth")
        if self.with_images:
            mesh = depth_to_mesh(depth)
            save_obj(mesh, self.out_root / f"{stem}.obj")
            scene = build_scene(mesh, self.texture, profile)
            if self.cfg.renderer in ("path", "both"):
                spp = self.cfg.spp or profile.spp
                image = render_path_traced(
                    scene, samples_per_pixel=spp,
                    max_bounces=self.cfg.max_bounces,
                    seed=_derive_seed(self.cfg.seed, self.run.shape_label,
                                      stem, "render"))
                save_png(image, self.out_root / f"{stem}.png")
            if self.cfg.renderer in ("phong", "both"):
                suffix = "_phong.png" if self.cfg.renderer == "both" \
                    else ".png"
                save_png(render_phong(scene), self.out_root / f"{stem}{suffix}")
        for f in files:
            self.files[f] = _sha256(self.out_root / f)
        self.last_good = self.sim.state.copy()

    def execute(self) -> dict[str, str]:
        plan = {idx: (stem, files) for idx, stem, files
                in _capture_relpaths(self.run, self.cfg.renderer,
                                     self.with_images)}
        run_dir = self.out_root / self.run.preset / self.run.shape_label
        run_dir.mkdir(parents=True, exist_ok=True)
        for idx, phase in enumerate(self.run.phases):
            log.info("run %s: phase %d %s %g", self.run.shape_label, idx,
                     phase.kind, phase.magnitude)
            try:
                self._drive(phase)
                if phase.capture:
                    self._capture(*plan[idx])
            except SimulationFault:
                if self.last_good is not None:
                    snap = run_dir / "last_good.mpms"
                    save_snapshot(self.last_good, snap)
                    self.files[str(snap.relative_to(self.out_root))] = \
                        _sha256(snap)
                raise
        return self.files


def run_pipeline(cfg: ScenarioConfig, dry_run: bool = False,
                 with_images: bool = True) -> dict:
    """Execute every run of the scenario and write the manifest.

    dry_run expands the trajectory and writes the manifest skeleton
    (expected file names, no hashes) without simulating. with_images=False
    stops after depth extraction (the `simulate` subcommand).
    """
    runs = expand_scenario(cfg)
    out_root = Path(cfg.output_dir)
    config_hash = hashlib.sha256(
        resolve_config_text(cfg).encode()).hexdigest()
    manifest = {
        "version": 1,
        "name": cfg.name,
        "preset": cfg.trajectory_preset or "",
        "profile": cfg.profile,
        "seed": cfg.seed,
        "config_hash": config_hash,
        "runs": len(runs),
        "captures": count_captures(runs),
        "files": {},
    }

    fault = None
    if dry_run:
        for run in runs:
            for _, _, files in _capture_relpaths(run, cfg.renderer,
                                                 with_images):
                for f in files:
                    manifest["files"][f] = None
    else:
        if cfg.texture is not None:
            texture = load_texture(cfg.texture)
        else:
            texture = flat_texture()
        for run in runs:
            driver = _RunDriver(run, cfg, out_root, texture, with_images)
            try:
                manifest["files"].update(driver.execute())
            except SimulationFault as exc:
                manifest["files"].update(driver.files)
                fault = exc
                break

    out_root.mkdir(parents=True, exist_ok=True)
    manifest_path = out_root / "manifest.json"
    manifest_path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    if fault is not None:
        raise fault
    return manifest
