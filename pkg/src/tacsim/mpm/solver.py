"""IMPM time stepping: relative-rest convergence loop plus advection.

A step runs {impose object motion; P2G; grid velocity + sticky walls;
G2P; pin} until the elastomer probe velocity matches the object probe
velocity within rest_threshold, or rest_limit iterations, then advects
positions exactly once. With improved=False (the plain-MPM baseline)
each step is a single transfer cycle with no pinning and no convergence
iteration.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import SimulationFault
from . import kernels
from .types import (KinematicCommand, MaterialParams, ParticleState,
                    RestMonitor, SimConfig, measure_progress, select_probes)

INPLANE_EPS = 1e-12


@dataclass
class StepStats:
    """Rest-loop outcome for one step."""

    iterations: int
    converged: bool
    ratio: float
    v_elastomer: np.ndarray
    v_object: np.ndarray


class Simulation:
    """Owns the particle state, grid scratch storage and the step loop."""

    def __init__(self, state: ParticleState, config: SimConfig,
                 material: MaterialParams | None = None, improved: bool = True):
        self.state = state
        self.config = config
        self.material = material or MaterialParams()
        self.improved = improved

        n = len(state)
        nx, ny, nz = config.grid_dims
        nbins = nx * ny * nz
        self._base = np.zeros((n, 3), dtype=np.int64)
        self._wts = np.zeros((n, 3, 3), dtype=np.float64)
        self._mv = np.zeros((n, 3), dtype=np.float64)
        self._Q = np.zeros((n, 3, 3), dtype=np.float64)
        self._bin_id = np.zeros(n, dtype=np.int64)
        self._counts = np.zeros(nbins, dtype=np.int64)
        self._starts = np.zeros(nbins, dtype=np.int64)
        self._cursor = np.zeros(nbins, dtype=np.int64)
        self._order = np.zeros(n, dtype=np.int64)
        self.grid_m = np.zeros(nbins, dtype=np.float64)
        self.grid_mom = np.zeros((nbins, 3), dtype=np.float64)
        self.grid_v = np.zeros((nbins, 3), dtype=np.float64)
        self._fault = np.zeros(2, dtype=np.int64)

        if improved:
            state.mark_pinned(config.pin_fraction)
        else:
            state.pinned[:] = False

    def _check_fault(self):
        if self._fault[0] != 0:
            code = int(self._fault[0])
            pid = int(self._fault[1])
            self._fault[:] = 0
            raise SimulationFault(kernels.FAULT_MESSAGES[code], particle=pid)

    def impose_command(self, command: KinematicCommand) -> None:
        obj = self.state.object_mask
        self.state.v[obj] = command.velocity_at(self.state.x[obj])
        self.state.C[obj] = command.affine()

    def transfer_cycle(self, update_F: bool = True,
                       apply_force: bool = True) -> None:
        """One P2G -> grid update -> G2P pass (no imposition, no advect).

        apply_force=False zeroes the stress term so the pass is a pure
        momentum re-blend: rest-loop probing must not re-apply the elastic
        impulse it already applied this step.
        """
        s, cfg, mat = self.state, self.config, self.material
        nx, ny, nz = cfg.grid_dims
        mu, lam = (mat.mu, mat.lam) if apply_force else (0.0, 0.0)
        kernels.p2g_prepare(s.x, s.v, s.m, s.C, s.F, s.V0, s.body,
                            cfg.grid_width, cfg.dt, mu, lam,
                            nx, ny, nz, self._base, self._wts, self._mv,
                            self._Q, self._bin_id, self._fault)
        self._check_fault()
        kernels.counting_sort(self._bin_id, nx * ny * nz, self._counts,
                              self._starts, self._cursor, self._order)
        kernels.p2g_gather(s.x, s.m, self._mv, self._Q, self._base, self._wts,
                           self._starts, self._counts, self._order,
                           cfg.grid_width, nx, ny, nz, self.grid_m, self.grid_mom)
        kernels.grid_velocity(self.grid_m, self.grid_mom, nx, ny, nz,
                              cfg.boundary_margin, self.grid_v)
        self._g2p(update_F)

    def _g2p(self, update_F: bool) -> None:
        """Gather the current grid field back to the particles. Reuses the
        base cells and weights of the last P2G, so it can re-run after a
        converged rest loop to integrate F exactly once per step."""
        s, cfg = self.state, self.config
        kernels.g2p(s.x, s.v, s.C, s.F, s.body, s.pinned, self._base,
                    self._wts, self.grid_v, cfg.grid_width, cfg.dt,
                    cfg.grid_dims[1], cfg.grid_dims[2], update_F)

    def advect(self) -> None:
        s, cfg = self.state, self.config
        lx, ly, lz = cfg.domain_size
        kernels.advect(s.x, s.v, cfg.dt, cfg.grid_width, lx, ly, lz, self._fault)
        self._check_fault()

    def _probe_ratio(self, monitor: RestMonitor) -> tuple[float, np.ndarray, np.ndarray]:
        v_e = self.state.v[monitor.elastomer_probe].copy()
        v_o = self.state.v[monitor.object_probe].copy()
        denom = float(np.linalg.norm(v_o))
        num = float(np.linalg.norm(v_e - v_o))
        if denom == 0.0:
            return (0.0 if num == 0.0 else np.inf), v_e, v_o
        return num / denom, v_e, v_o

    def relative_rest_loop(self, command: KinematicCommand,
                           monitor: RestMonitor) -> StepStats:
        """Algorithm 1 body: transfer cycles until the probe pair agrees.

        The convergence ratio is evaluated on post-G2P velocities, so the
        object probe reflects the grid blend rather than the raw command
        (mutual influence between bodies). Commands with in-plane speed
        below 1e-12 at the probe are treated as converged after a single
        cycle: pure pressing needs no rest alignment and the ratio would
        be ill-conditioned.

        The first cycle carries the elastic impulse; further cycles are
        force-free momentum re-blends that propagate the imposed object
        velocity (re-applying stress every iteration would integrate the
        force k times per step). F likewise integrates exactly once, from
        the accepted field, after the loop settles.
        """
        cfg = self.config
        trivial = command.inplane_speed(
            self.state.x[monitor.object_probe]) < INPLANE_EPS
        limit = cfg.rest_limit if self.improved else 1
        cnt = 0
        converged = False
        ratio = np.inf
        v_e = np.zeros(3)
        v_o = np.zeros(3)
        while True:
            self.impose_command(command)
            self.transfer_cycle(update_F=False, apply_force=(cnt == 0))
            cnt += 1
            ratio, v_e, v_o = self._probe_ratio(monitor)
            converged = ratio <= cfg.rest_threshold or (trivial and self.improved)
            if converged or cnt >= limit:
                break
        self._g2p(update_F=True)
        return StepStats(iterations=cnt, converged=converged, ratio=ratio,
                         v_elastomer=v_e, v_object=v_o)

    def step(self, command: KinematicCommand, monitor: RestMonitor) -> StepStats:
        stats = self.relative_rest_loop(command, monitor)
        # The object is kinematic: advect it by the command, not the grid
        # blend, or contact drag warps the body and its measured progress.
        self.impose_command(command)
        self.advect()
        return stats

    def run_phase(self, command: KinematicCommand, monitor: RestMonitor,
                  target_distance: float | None = None,
                  target_angle: float | None = None,
                  max_steps: int = 200_000,
                  on_step=None) -> list[StepStats]:
        """Step until the probe has moved target_distance mm (translation)
        or swept target_angle degrees (rotation), per measure_progress."""
        history: list[StepStats] = []
        for _ in range(max_steps):
            stats = self.step(command, monitor)
            history.append(stats)
            progress = measure_progress(monitor, self.state)
            if on_step is not None:
                on_step(stats, progress)
            if target_distance is not None:
                if np.linalg.norm(progress["displacement"]) >= target_distance:
                    return history
            if target_angle is not None:
                if abs(progress["rotation_angle"]) >= abs(target_angle):
                    return history
            if target_distance is None and target_angle is None:
                return history
        raise SimulationFault("phase failed to reach its target within "
                              f"{max_steps} steps")

    def new_monitor(self, rotation_center=None) -> RestMonitor:
        return select_probes(self.state, self.config.grid_width,
                             rotation_center=rotation_center)
