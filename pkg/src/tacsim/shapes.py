"""Indenter geometry: signed distance functions sampled into particle clouds.

Shapes live in their local frame (centered at the origin, z up,
extrusions spanning [-h/2, h/2]); a Pose rotates about z then
translates. Boolean shapes (moon, pacman, dot_in) are 2D disc
combinations extruded to the indenter height; edge_round_radius is
subtracted from the hard SDF, which dilates the shape by that radius
and rounds its edges.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .mpm.types import ELASTOMER, OBJECT, ParticleState

SHAPE_KINDS = ("sphere", "cylinder", "torus", "prism", "moon", "pacman", "dot_in")

_DIM_DEFAULTS = {
    "sphere": {"radius": 4.0},
    "cylinder": {"radius": 4.0, "height": 6.0},
    "torus": {"major_radius": 3.0, "minor_radius": 1.0},
    "prism": {"size_x": 6.0, "size_y": 6.0, "size_z": 6.0},
    "moon": {"radius": 4.0, "cut_radius": 3.0, "cut_offset": 2.5, "height": 6.0},
    "pacman": {"radius": 4.0, "height": 6.0},
    "dot_in": {"radius": 4.0, "inner_radius": 2.0, "height": 6.0},
}

# only the test shapes cut from discs carry rounded edges by default
_ROUND_DEFAULTS = {"moon": 0.5, "pacman": 0.5, "dot_in": 0.5}


@dataclass(frozen=True)
class ShapeSpec:
    kind: str
    dimensions: dict = field(default_factory=dict)
    edge_round_radius: float = 0.0

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise ConfigurationError(f"unknown shape kind: {self.kind!r}")
        for name, value in self.dimensions.items():
            if value <= 0:
                raise ConfigurationError(f"{self.kind}.{name} must be > 0, got {value}")
        if self.edge_round_radius < 0:
            raise ConfigurationError("edge_round_radius must be >= 0")
        if self.dimensions and self.edge_round_radius >= min(self.dimensions.values()):
            raise ConfigurationError(
                "edge_round_radius must be smaller than the smallest feature size")

    def dim(self, name: str) -> float:
        return self.dimensions[name]


def shape_spec(kind: str, edge_round_radius: float | None = None, **dims) -> ShapeSpec:
    """Build a ShapeSpec from per-kind defaults overridden by kwargs."""
    if kind not in _DIM_DEFAULTS:
        raise ConfigurationError(f"unknown shape kind: {kind!r}")
    merged = dict(_DIM_DEFAULTS[kind])
    for name, value in dims.items():
        if name not in merged:
            raise ConfigurationError(f"shape {kind!r} has no dimension {name!r}")
        merged[name] = float(value)
    if edge_round_radius is None:
        edge_round_radius = _ROUND_DEFAULTS.get(kind, 0.0)
    return ShapeSpec(kind=kind, dimensions=merged,
                     edge_round_radius=float(edge_round_radius))


@dataclass(frozen=True)
class Pose:
    """Rotation about the sensor normal (z, degrees) then translation."""

    translation: tuple = (0.0, 0.0, 0.0)
    rotation: float = 0.0

    def __post_init__(self):
        rot = float(self.rotation) % 360.0
        if rot > 180.0:
            rot -= 360.0
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation",
                           tuple(float(t) for t in self.translation))

    def apply(self, points: np.ndarray) -> np.ndarray:
        theta = np.radians(self.rotation)
        c, s = np.cos(theta), np.sin(theta)
        out = np.empty_like(points)
        out[:, 0] = c * points[:, 0] - s * points[:, 1]
        out[:, 1] = s * points[:, 0] + c * points[:, 1]
        out[:, 2] = points[:, 2]
        return out + np.asarray(self.translation)


def _box_sdf(q: np.ndarray) -> np.ndarray:
    # q = |p| - half_extents, per component
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
    inside = np.minimum(q.max(axis=-1), 0.0)
    return outside + inside


def _extrude(d2: np.ndarray, z: np.ndarray, height: float) -> np.ndarray:
    w = np.stack([d2, np.abs(z) - 0.5 * height], axis=-1)
    return _box_sdf(w)


def _disc(x: np.ndarray, y: np.ndarray, radius: float,
          cx: float = 0.0, cy: float = 0.0) -> np.ndarray:
    return np.hypot(x - cx, y - cy) - radius


def _hard_sdf(shape: ShapeSpec, pts: np.ndarray) -> np.ndarray:
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    kind, d = shape.kind, shape.dim
    if kind == "sphere":
        return np.linalg.norm(pts, axis=1) - d("radius")
    if kind == "cylinder":
        return _extrude(_disc(x, y, d("radius")), z, d("height"))
    if kind == "torus":
        q = np.hypot(x, y) - d("major_radius")
        return np.hypot(q, z) - d("minor_radius")
    if kind == "prism":
        half = 0.5 * np.array([d("size_x"), d("size_y"), d("size_z")])
        return _box_sdf(np.abs(pts) - half)
    if kind == "moon":
        body = _disc(x, y, d("radius"))
        cut = _disc(x, y, d("cut_radius"), cx=d("cut_offset"))
        return _extrude(np.maximum(body, -cut), z, d("height"))
    if kind == "pacman":
        body = _disc(x, y, d("radius"))
        # remove the 90-degree wedge straddling +x (mouth edges at +/-45)
        s = np.sqrt(0.5)
        wedge = np.minimum(s * x - s * y, s * x + s * y)
        return _extrude(np.maximum(body, wedge), z, d("height"))
    if kind == "dot_in":
        ring = np.maximum(_disc(x, y, d("radius")),
                          d("inner_radius") - np.hypot(x, y))
        return _extrude(ring, z, d("height"))
    raise ConfigurationError(f"unknown shape kind: {kind!r}")


def sdf_eval(shape: ShapeSpec, points) -> np.ndarray | float:
    """Signed distance: negative inside, zero on the surface."""
    pts = np.asarray(points, dtype=np.float64)
    scalar = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if not np.isfinite(pts).all():
        raise ConfigurationError("sdf_eval requires finite points")
    d = _hard_sdf(shape, pts) - shape.edge_round_radius
    return float(d[0]) if scalar else d


def _shape_halfwidths(shape: ShapeSpec) -> np.ndarray:
    d = shape.dim
    kind = shape.kind
    if kind == "sphere":
        hw = np.full(3, d("radius"))
    elif kind == "cylinder":
        hw = np.array([d("radius"), d("radius"), 0.5 * d("height")])
    elif kind == "torus":
        r = d("major_radius") + d("minor_radius")
        hw = np.array([r, r, d("minor_radius")])
    elif kind == "prism":
        hw = 0.5 * np.array([d("size_x"), d("size_y"), d("size_z")])
    else:
        hw = np.array([d("radius"), d("radius"), 0.5 * d("height")])
    return hw + shape.edge_round_radius


def _axis_coords(halfwidth: float, spacing: float) -> np.ndarray:
    # symmetric closed lattice: faces of an aligned extent land on points
    k = int(np.floor(2.0 * halfwidth / spacing + 1e-9))
    return (np.arange(k + 1) - 0.5 * k) * spacing


def sample_particles(shape: ShapeSpec, pose: Pose, spacing: float,
                     density: float = 1.0, body: int = OBJECT) -> ParticleState:
    """Regular lattice of step `spacing` clipped by SDF <= 0, then posed."""
    if spacing <= 0:
        raise ConfigurationError("spacing must be positive")
    hw = _shape_halfwidths(shape)
    ax = [_axis_coords(h, spacing) for h in hw]
    gx, gy, gz = np.meshgrid(ax[0], ax[1], ax[2], indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
    keep = sdf_eval(shape, pts) <= 0.0
    pts = pts[keep]
    if len(pts) == 0:
        raise ConfigurationError(
            f"shape {shape.kind!r} produced no particles at spacing {spacing}")
    pts = pose.apply(pts)
    volume = spacing ** 3
    n = len(pts)
    return ParticleState(pts, np.zeros((n, 3)), np.full(n, density * volume),
                         np.full(n, volume), np.full(n, body, dtype=np.uint8))


def elastomer_block(extent=(20.0, 20.0, 4.0), counts=(201, 201, 41),
                    origin=(0.0, 0.0, 0.0), density: float = 1.0) -> ParticleState:
    """Cuboid lattice spanning `extent` from `origin`; the top lattice
    layer is recorded in surface_ids for depth extraction."""
    extent = np.asarray(extent, dtype=np.float64)
    counts = tuple(int(c) for c in counts)
    if any(c < 2 for c in counts):
        raise ConfigurationError("elastomer counts must be >= 2 per axis")
    if np.any(extent <= 0):
        raise ConfigurationError("elastomer extent must be positive")
    axes = [np.linspace(0.0, extent[d], counts[d]) + origin[d] for d in range(3)]
    gx, gy, gz = np.meshgrid(axes[0], axes[1], axes[2], indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
    spacings = extent / (np.asarray(counts) - 1.0)
    volume = float(np.prod(spacings))
    n = len(pts)
    state = ParticleState(pts, np.zeros((n, 3)), np.full(n, density * volume),
                          np.full(n, volume), np.full(n, ELASTOMER, dtype=np.uint8))
    # top layer: meshgrid order makes z the fastest axis
    state.surface_ids = np.flatnonzero(
        np.arange(n) % counts[2] == counts[2] - 1).astype(np.int64)
    return state
