"""State containers and configuration for the elastomer deformation solver.

Particle data is stored struct-of-arrays (float64 throughout: the
conservation contracts are tighter than float32 roundoff). Body tags:
0 = elastomer (deformable, carries stress), 1 = object (rigid indenter,
kinematically driven, stress-free, F frozen at identity).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError

ELASTOMER = 0
OBJECT = 1


@dataclass
class MaterialParams:
    """Elastic constants of the gel; (E, nu) converted to the Lame pair."""

    youngs_modulus: float = 1.45e5
    poisson_ratio: float = 0.45

    def __post_init__(self):
        if not (0.0 < self.poisson_ratio < 0.5):
            raise ConfigurationError(
                f"poisson_ratio must be in (0, 0.5), got {self.poisson_ratio}")
        if self.youngs_modulus <= 0:
            raise ConfigurationError(
                f"youngs_modulus must be positive, got {self.youngs_modulus}")

    @property
    def mu(self) -> float:
        return self.youngs_modulus / (2.0 * (1.0 + self.poisson_ratio))

    @property
    def lam(self) -> float:
        e, nu = self.youngs_modulus, self.poisson_ratio
        return e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))


@dataclass
class SimConfig:
    """Grid, time step and relative-rest loop settings.

    grid_width is the node spacing W in mm; node i sits at i*W, so the
    domain is the box [0, (dims-1)*W]. boundary_margin nodes on every face
    get their velocity zeroed each cycle (sticky walls).
    """

    grid_width: float
    dt: float = 1e-4
    grid_dims: tuple[int, int, int] = (64, 64, 64)
    boundary_margin: int = 3
    rest_threshold: float = 0.05
    rest_limit: int = 50
    pin_fraction: float = 0.5

    def __post_init__(self):
        if self.grid_width <= 0 or self.dt <= 0:
            raise ConfigurationError("grid_width and dt must be positive")
        if self.rest_threshold <= 0:
            raise ConfigurationError("rest_threshold must be positive")
        if self.rest_limit < 1:
            raise ConfigurationError("rest_limit must be >= 1")
        if self.boundary_margin < 0:
            raise ConfigurationError("boundary_margin must be >= 0")
        if any(n < 4 for n in self.grid_dims):
            raise ConfigurationError("grid_dims must be at least 4 nodes per axis")
        if not (0.0 <= self.pin_fraction <= 1.0):
            raise ConfigurationError("pin_fraction must be in [0, 1]")

    @property
    def domain_size(self) -> np.ndarray:
        return (np.asarray(self.grid_dims, dtype=np.float64) - 1.0) * self.grid_width


class ParticleState:
    """SoA particle storage shared by both bodies.

    x (mm), v (mm/s), m, C (1/s), F, V0 (mm^3), body tag. Elastomer
    particles that belong to the initial top lattice layer are listed in
    surface_ids (used by the depth extractor); pinned marks the lower
    pin_fraction of the elastomer height (z-velocity clamped to 0 by the
    rest loop).
    """

    def __init__(self, x, v, m, V0, body):
        n = len(x)
        self.x = np.ascontiguousarray(x, dtype=np.float64).reshape(n, 3)
        self.v = np.ascontiguousarray(v, dtype=np.float64).reshape(n, 3)
        self.m = np.ascontiguousarray(m, dtype=np.float64).reshape(n)
        self.V0 = np.ascontiguousarray(V0, dtype=np.float64).reshape(n)
        self.body = np.ascontiguousarray(body, dtype=np.uint8).reshape(n)
        self.C = np.zeros((n, 3, 3), dtype=np.float64)
        self.F = np.tile(np.eye(3), (n, 1, 1))
        self.surface_ids = np.empty(0, dtype=np.int64)
        self.pinned = np.zeros(n, dtype=bool)
        if np.any(self.m <= 0) or np.any(self.V0 <= 0):
            raise ConfigurationError("particle mass and init_volume must be positive")

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def elastomer_mask(self) -> np.ndarray:
        return self.body == ELASTOMER

    @property
    def object_mask(self) -> np.ndarray:
        return self.body == OBJECT

    def mark_pinned(self, pin_fraction: float) -> None:
        """Pin the lower pin_fraction of the elastomer's initial height."""
        el = self.elastomer_mask
        if not el.any() or pin_fraction <= 0.0:
            self.pinned[:] = False
            return
        z = self.x[el, 2]
        zmin, zmax = z.min(), z.max()
        cutoff = zmin + pin_fraction * (zmax - zmin) + 1e-9
        self.pinned[:] = el & (self.x[:, 2] <= cutoff)

    def copy(self) -> "ParticleState":
        dup = ParticleState(self.x.copy(), self.v.copy(), self.m.copy(),
                            self.V0.copy(), self.body.copy())
        dup.C = self.C.copy()
        dup.F = self.F.copy()
        dup.surface_ids = self.surface_ids.copy()
        dup.pinned = self.pinned.copy()
        return dup


def merge_states(a: ParticleState, b: ParticleState) -> ParticleState:
    """Concatenate two clouds; surface ids from `a` are kept (re-indexed)."""
    out = ParticleState(
        np.vstack([a.x, b.x]), np.vstack([a.v, b.v]),
        np.concatenate([a.m, b.m]), np.concatenate([a.V0, b.V0]),
        np.concatenate([a.body, b.body]))
    out.C = np.vstack([a.C, b.C])
    out.F = np.vstack([a.F, b.F])
    out.surface_ids = np.concatenate([a.surface_ids, b.surface_ids + len(a)])
    out.pinned = np.concatenate([a.pinned, b.pinned])
    return out


@dataclass
class KinematicCommand:
    """Rigid motion imposed on the object body each rest-loop iteration.

    translate: every object particle gets `velocity`.
    rotate: velocity = omega x (p - center), omega about +z (deg/s in the
    scenario layer, rad/s here); affine() is the exact spin matrix so the
    grid sees the rigid field to first order.
    """

    kind: str = "translate"
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega: float = 0.0

    @staticmethod
    def translate(v) -> "KinematicCommand":
        return KinematicCommand(kind="translate", velocity=np.asarray(v, dtype=np.float64))

    @staticmethod
    def rotate(center, omega_rad_s: float) -> "KinematicCommand":
        return KinematicCommand(kind="rotate",
                                center=np.asarray(center, dtype=np.float64),
                                omega=float(omega_rad_s))

    def velocity_at(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        if self.kind == "translate":
            return np.broadcast_to(self.velocity, pts.shape).copy()
        rel = pts - self.center
        v = np.zeros_like(pts)
        v[:, 0] = -self.omega * rel[:, 1]
        v[:, 1] = self.omega * rel[:, 0]
        return v

    def affine(self) -> np.ndarray:
        a = np.zeros((3, 3))
        if self.kind == "rotate":
            a[0, 1] = -self.omega
            a[1, 0] = self.omega
        return a

    def inplane_speed(self, probe_pos: np.ndarray) -> float:
        v = self.velocity_at(probe_pos.reshape(1, 3))[0]
        return float(np.hypot(v[0], v[1]))


@dataclass
class RestMonitor:
    """Velocity calibration pair: lowest object particle and the elastomer
    particle nearest to it, chosen at phase start. Initial positions are
    cached for displacement/angle readout; the angle is unwrapped across
    steps."""

    object_probe: int
    elastomer_probe: int
    object_start: np.ndarray
    rotation_center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    _angle_prev: float = 0.0
    _angle_unwrapped: float = 0.0
    _angle_init: bool = False


def select_probes(state: ParticleState, grid_width: float,
                  rotation_center: np.ndarray | None = None) -> RestMonitor:
    """Pick the calibration pair.

    Default object probe: minimum z, ties broken by lexicographically
    smallest (x, y). For rotation phases the probe must sit at least two
    grid cells from the rotation axis to give a usable angle; if the
    default probe is closer than that, the farthest bottom-layer object
    particle is used instead.
    """
    obj_ids = np.flatnonzero(state.object_mask)
    el_ids = np.flatnonzero(state.elastomer_mask)
    if len(obj_ids) == 0 or len(el_ids) == 0:
        raise ConfigurationError("both bodies must be present to select probes")

    ox = state.x[obj_ids]
    zmin = ox[:, 2].min()
    bottom = obj_ids[np.abs(state.x[obj_ids, 2] - zmin) <= 1e-9]
    bx = state.x[bottom]
    order = np.lexsort((bx[:, 1], bx[:, 0]))
    probe = int(bottom[order[0]])

    center = np.zeros(3)
    if rotation_center is not None:
        rc = np.asarray(rotation_center, float).ravel()
        center[:rc.size] = rc  # accepts (cx, cy) or (cx, cy, cz)
    if rotation_center is not None:
        r = np.hypot(state.x[probe, 0] - center[0], state.x[probe, 1] - center[1])
        if r < 2.0 * grid_width:
            layer = ox[:, 2] <= zmin + 0.5 * grid_width
            cand = obj_ids[layer]
            rad = np.hypot(state.x[cand, 0] - center[0], state.x[cand, 1] - center[1])
            best = rad.max()
            far = cand[np.abs(rad - best) <= 1e-9]
            fx = state.x[far]
            order = np.lexsort((fx[:, 1], fx[:, 0]))
            probe = int(far[order[0]])

    d = state.x[el_ids] - state.x[probe]
    dist2 = np.einsum("ij,ij->i", d, d)
    nearest = el_ids[int(np.argmin(dist2))]

    return RestMonitor(object_probe=probe, elastomer_probe=int(nearest),
                       object_start=state.x[probe].copy(),
                       rotation_center=center)


def measure_progress(monitor: RestMonitor, state: ParticleState) -> dict:
    """Displacement of the object probe since phase start plus the signed,
    unwrapped in-plane angle (degrees) of the probe about the rotation
    center."""
    pos = state.x[monitor.object_probe]
    disp = pos - monitor.object_start
    rel = pos - monitor.rotation_center
    ang = float(np.degrees(np.arctan2(rel[1], rel[0])))
    if not monitor._angle_init:
        monitor._angle_prev = ang
        monitor._angle_init = True
    delta = ang - monitor._angle_prev
    if delta > 180.0:
        delta -= 360.0
    elif delta < -180.0:
        delta += 360.0
    monitor._angle_unwrapped += delta
    monitor._angle_prev = ang
    return {"displacement": disp.copy(),
            "rotation_angle": monitor._angle_unwrapped}
