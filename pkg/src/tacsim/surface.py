"""Deformed-surface depth extraction, perturbation and heightfield meshing.

Depth is positive into the gel (indentation) and clamped at zero so the
raster never reports material above the undeformed plane. The mesh
negates depth, so with a camera on +z looking down the indentation
deforms away from the camera, matching a bottom-viewing sensor.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import LinearNDInterpolator, NearestNDInterpolator

from .errors import ExtractionError
from .mpm.types import ParticleState

DPTH_MAGIC = b"DPTH"


@dataclass
class DepthMap:
    values: np.ndarray  # (height, width) float64, mm
    pixel_pitch: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ExtractionError("depth values must be a 2D array")
        if not np.isfinite(self.values).all():
            raise ExtractionError("depth map contains non-finite values")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass
class HeightfieldMesh:
    vertices: np.ndarray   # (n, 3) mm
    uvs: np.ndarray        # (n, 2) in [0, 1]^2
    triangles: np.ndarray  # (m, 3) int64
    normals: np.ndarray    # (n, 3) unit


def extract_surface_depth(cloud: ParticleState, resolution, pitch: float,
                          center=None, rest_height: float | None = None) -> DepthMap:
    """Scatter-interpolate the tracked surface particles onto a regular
    raster: piecewise-linear on the Delaunay triangulation of their (x, y)
    positions, nearest-neighbor fallback outside the hull.

    resolution is (width, height); the raster is centered on `center`
    (default: surface-particle centroid). rest_height is the undeformed
    surface z (default: the current maximum surface z).
    """
    width, height = int(resolution[0]), int(resolution[1])
    if width < 1 or height < 1 or pitch <= 0:
        raise ExtractionError("raster resolution and pitch must be positive")
    ids = cloud.surface_ids
    if len(ids) < 3:
        raise ExtractionError("need at least 3 surface particles to interpolate")
    pts = cloud.x[ids]
    if rest_height is None:
        rest_height = float(pts[:, 2].max())
    depth = np.maximum(rest_height - pts[:, 2], 0.0)
    if center is None:
        center = pts[:, :2].mean(axis=0)
    cx, cy = float(center[0]), float(center[1])

    xs = cx + (np.arange(width) - 0.5 * (width - 1)) * pitch
    ys = cy + (np.arange(height) - 0.5 * (height - 1)) * pitch
    gx, gy = np.meshgrid(xs, ys)
    raster_pts = np.column_stack([gx.ravel(), gy.ravel()])

    xy = pts[:, :2]
    try:
        linear = LinearNDInterpolator(xy, depth)
        values = linear(raster_pts)
    except Exception as exc:  # degenerate triangulation (collinear particles)
        raise ExtractionError(f"surface triangulation failed: {exc}") from exc
    hole = np.isnan(values)
    if hole.any():
        nearest = NearestNDInterpolator(xy, depth)
        values[hole] = nearest(raster_pts[hole])
    return DepthMap(values.reshape(height, width), pixel_pitch=float(pitch))


def contact_radius(d: DepthMap, threshold: float) -> float:
    """Area-equivalent radius (mm) of the region deeper than `threshold`.

    The contact patch of a press is estimated as the pixels whose depth
    exceeds the threshold; the radius is that of a circle of equal area,
    which is insensitive to the patch's raster discretization.
    """
    if threshold < 0:
        raise ExtractionError("contact threshold must be >= 0")
    area = np.count_nonzero(d.values > threshold) * d.pixel_pitch ** 2
    return float(np.sqrt(area / np.pi))


def perturb_depth(d: DepthMap, amplitude: float = 1e-4,
                  seed: int = 0) -> DepthMap:
    """Add uniform noise in [-amplitude, amplitude]; breaks flat-region
    normal degeneracy. Deterministic for a given seed."""
    if amplitude < 0:
        raise ExtractionError("perturbation amplitude must be >= 0")
    if amplitude == 0:
        return DepthMap(d.values.copy(), d.pixel_pitch)
    rng = np.random.default_rng(seed)
    noise = rng.uniform(-amplitude, amplitude, size=d.values.shape)
    return DepthMap(d.values + noise, d.pixel_pitch)


def depth_to_mesh(d: DepthMap) -> HeightfieldMesh:
    """Heightfield mesh: vertex (col*pitch, row*pitch, -depth), UV corners
    at (0,0)/(1,0)/(0,1)/(1,1), two CCW triangles per raster cell, normals
    by area-weighted face averaging."""
    h, w = d.height, d.width
    if w < 2 or h < 2:
        raise ExtractionError("depth map must be at least 2x2 to mesh")
    cols, rows = np.meshgrid(np.arange(w), np.arange(h))
    vertices = np.column_stack([
        cols.ravel() * d.pixel_pitch,
        rows.ravel() * d.pixel_pitch,
        -d.values.ravel(),
    ]).astype(np.float64)
    uvs = np.column_stack([cols.ravel() / (w - 1.0), rows.ravel() / (h - 1.0)])

    idx = np.arange(h * w).reshape(h, w)
    v00 = idx[:-1, :-1].ravel()
    v01 = idx[:-1, 1:].ravel()
    v10 = idx[1:, :-1].ravel()
    v11 = idx[1:, 1:].ravel()
    tris = np.empty((2 * (h - 1) * (w - 1), 3), dtype=np.int64)
    tris[0::2] = np.column_stack([v00, v01, v10])
    tris[1::2] = np.column_stack([v01, v11, v10])

    e1 = vertices[tris[:, 1]] - vertices[tris[:, 0]]
    e2 = vertices[tris[:, 2]] - vertices[tris[:, 0]]
    face_n = np.cross(e1, e2)  # length = 2x area, the weighting we want
    normals = np.zeros_like(vertices)
    for k in range(3):
        np.add.at(normals, tris[:, k], face_n)
    norm = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = normals / np.where(norm > 0, norm, 1.0)
    return HeightfieldMesh(vertices=vertices, uvs=uvs, triangles=tris,
                           normals=normals)


def save_depth(d: DepthMap, path) -> None:
    with open(path, "wb") as fh:
        fh.write(DPTH_MAGIC)
        fh.write(np.uint32(d.width).tobytes())
        fh.write(np.uint32(d.height).tobytes())
        fh.write(np.float32(d.pixel_pitch).tobytes())
        fh.write(d.values.astype("<f4").tobytes())


def load_depth(path) -> DepthMap:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != DPTH_MAGIC:
        raise ExtractionError(f"not a DPTH file: {path}")
    width = int(np.frombuffer(blob, "<u4", count=1, offset=4)[0])
    height = int(np.frombuffer(blob, "<u4", count=1, offset=8)[0])
    pitch = float(np.frombuffer(blob, "<f4", count=1, offset=12)[0])
    expected = 16 + 4 * width * height
    if len(blob) != expected:
        raise ExtractionError(f"truncated DPTH file: {path}")
    values = np.frombuffer(blob, "<f4", count=width * height, offset=16)
    return DepthMap(values.reshape(height, width).astype(np.float64), pitch)


def save_obj(mesh: HeightfieldMesh, path) -> None:
    """Wavefront OBJ export, triangles only, 1-based v/vt/vn indices."""
    lines = []
    for p in mesh.vertices:
        lines.append(f"v {p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n")
    for t in mesh.uvs:
        lines.append(f"vt {t[0]:.9g} {t[1]:.9g}\n")
    for n in mesh.normals:
        lines.append(f"vn {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}\n")
    for a, b, c in mesh.triangles + 1:
        lines.append(f"f {a}/{a}/{a} {b}/{b}/{b} {c}/{c}/{c}\n")
    with open(path, "w") as fh:
        fh.writelines(lines)
