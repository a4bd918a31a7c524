"""Scene assembly: triangle soup, materials, lights, camera, profiles.

Everything the compiled kernels need is flattened into numpy arrays.
Radiance and albedo live in [0, 1] units (8-bit channels divided by
255); tone mapping multiplies by exposure, clamps to [0, 1] and
quantizes back to 8 bits.

Sensor profiles place a pinhole camera on +z looking straight down at
the heightfield with its frustum matched to the raster (half a pixel of
overhang per side), so pixel (r, c) lines up with raster cell (r, c)
and, at matching resolutions, with texture texel (r, c).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from PIL import Image as PILImage

from ..errors import ConfigurationError, RenderError
from ..surface import HeightfieldMesh


@dataclass(frozen=True)
class RectLight:
    """Rectangular area emitter: corner plus two edge vectors."""

    corner: tuple
    edge_u: tuple
    edge_v: tuple
    radiance: tuple  # RGB, [0, 1] scale

    @property
    def area(self) -> float:
        return float(np.linalg.norm(np.cross(self.edge_u, self.edge_v)))

    @property
    def normal(self) -> np.ndarray:
        n = np.cross(self.edge_u, self.edge_v)
        return n / np.linalg.norm(n)

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.corner) + 0.5 * np.asarray(self.edge_u)
                + 0.5 * np.asarray(self.edge_v))


@dataclass(frozen=True)
class Camera:
    position: tuple
    forward: tuple
    up: tuple
    fov_v_degrees: float

    def basis(self):
        f = np.asarray(self.forward, dtype=np.float64)
        norm = np.linalg.norm(f)
        if norm == 0:
            raise ConfigurationError("camera forward direction is zero")
        f = f / norm
        up = np.asarray(self.up, dtype=np.float64)
        r = np.cross(f, up)
        rn = np.linalg.norm(r)
        if rn == 0:
            raise ConfigurationError("camera up is parallel to forward")
        r = r / rn
        u = np.cross(r, f)
        return f, r, u


@dataclass(frozen=True)
class SensorProfile:
    name: str
    resolution: tuple          # (width, height) pixels
    pixel_pitch: float         # mm/pixel on the gel plane
    camera_height: float       # mm above the undeformed surface
    lights: tuple              # of RectLight, in mesh-local mm
    exposure: float = 1.0
    spp: int = 128
    max_bounces: int = 4

    def camera_for(self, extent_x: float, extent_y: float) -> Camera:
        """Pinhole over the raster center; fov chosen so the image plane
        spans resolution*pitch exactly (pixel centers on raster cells)."""
        w, h = self.resolution
        half_span = 0.5 * h * self.pixel_pitch
        fov_v = 2.0 * np.degrees(np.arctan(half_span / self.camera_height))
        return Camera(position=(0.5 * extent_x, 0.5 * extent_y, self.camera_height),
                      forward=(0.0, 0.0, -1.0), up=(0.0, 1.0, 0.0),
                      fov_v_degrees=fov_v)


class Scene:
    """Flattened triangle scene with one optional UV texture.

    Arrays: v0/e1/e2 for Moller-Trumbore, per-corner shading normals and
    UVs, per-triangle material id and light id (-1 when not an emitter
    sampled by NEE). Materials: albedo RGB, emission RGB, textured flag.
    """

    def __init__(self, camera: Camera, resolution, exposure: float = 1.0):
        self.camera = camera
        self.resolution = (int(resolution[0]), int(resolution[1]))
        self.exposure = float(exposure)
        self._v0 = []
        self._e1 = []
        self._e2 = []
        self._n = []
        self._uv = []
        self._mat = []
        self._light = []
        self.materials_albedo = []
        self.materials_emission = []
        self.materials_textured = []
        self.texture = np.ones((1, 1, 3), dtype=np.float64)
        self.lights: list[RectLight] = []
        self._packed = None

    def add_material(self, albedo=(0.0, 0.0, 0.0), emission=(0.0, 0.0, 0.0),
                     textured: bool = False) -> int:
        self.materials_albedo.append(tuple(albedo))
        self.materials_emission.append(tuple(emission))
        self.materials_textured.append(bool(textured))
        self._packed = None
        return len(self.materials_albedo) - 1

    def add_triangles(self, vertices, triangles, normals, uvs, material: int,
                      light_id: int = -1) -> None:
        v = np.asarray(vertices, dtype=np.float64)
        t = np.asarray(triangles, dtype=np.int64)
        n = np.asarray(normals, dtype=np.float64)
        u = (np.zeros((len(v), 2)) if uvs is None
             else np.asarray(uvs, dtype=np.float64))
        self._v0.append(v[t[:, 0]])
        self._e1.append(v[t[:, 1]] - v[t[:, 0]])
        self._e2.append(v[t[:, 2]] - v[t[:, 0]])
        self._n.append(np.stack([n[t[:, 0]], n[t[:, 1]], n[t[:, 2]]], axis=1))
        self._uv.append(np.stack([u[t[:, 0]], u[t[:, 1]], u[t[:, 2]]], axis=1))
        self._mat.append(np.full(len(t), material, dtype=np.int32))
        self._light.append(np.full(len(t), light_id, dtype=np.int32))
        self._packed = None

    def add_light(self, light: RectLight, two_sided: bool = False,
                  albedo=(0.0, 0.0, 0.0)) -> None:
        """Register an NEE-sampled emitter and add its geometry; a
        nonzero albedo makes the emitter surface reflective as well."""
        lid = len(self.lights)
        self.lights.append(light)
        mat = self.add_material(albedo=albedo, emission=light.radiance)
        c = np.asarray(light.corner, dtype=np.float64)
        eu = np.asarray(light.edge_u, dtype=np.float64)
        ev = np.asarray(light.edge_v, dtype=np.float64)
        verts = np.stack([c, c + eu, c + eu + ev, c + ev])
        tris = np.array([[0, 1, 2], [0, 2, 3]])
        normals = np.tile(light.normal, (4, 1))
        self.add_triangles(verts, tris, normals, None, mat, light_id=lid)
        if two_sided:
            self.add_triangles(verts, tris[:, ::-1], -normals, None, mat,
                               light_id=lid)

    def set_texture(self, texture: np.ndarray) -> None:
        tex = np.asarray(texture, dtype=np.float64)
        if tex.ndim != 3 or tex.shape[2] != 3 or tex.size == 0:
            raise ConfigurationError("texture must be (h, w, 3)")
        self.texture = tex
        self._packed = None

    def packed(self) -> dict:
        """Concatenate everything into kernel-ready contiguous arrays."""
        if self._packed is not None:
            return self._packed
        if not self._v0:
            raise RenderError("scene has no geometry")
        lights = self.lights
        pack = {
            "v0": np.ascontiguousarray(np.vstack(self._v0)),
            "e1": np.ascontiguousarray(np.vstack(self._e1)),
            "e2": np.ascontiguousarray(np.vstack(self._e2)),
            "normals": np.ascontiguousarray(np.vstack(self._n)),
            "uvs": np.ascontiguousarray(np.vstack(self._uv)),
            "mat": np.concatenate(self._mat),
            "light_id": np.concatenate(self._light),
            "mat_albedo": np.asarray(self.materials_albedo, dtype=np.float64),
            "mat_emission": np.asarray(self.materials_emission, dtype=np.float64),
            "mat_textured": np.asarray(self.materials_textured, dtype=np.uint8),
            "texture": np.ascontiguousarray(self.texture),
            "light_corner": np.asarray([l.corner for l in lights], np.float64).reshape(-1, 3),
            "light_eu": np.asarray([l.edge_u for l in lights], np.float64).reshape(-1, 3),
            "light_ev": np.asarray([l.edge_v for l in lights], np.float64).reshape(-1, 3),
            "light_radiance": np.asarray([l.radiance for l in lights], np.float64).reshape(-1, 3),
            "light_normal": np.asarray([l.normal for l in lights], np.float64).reshape(-1, 3),
            "light_area": np.asarray([l.area for l in lights], np.float64),
        }
        self._packed = pack
        return pack


def _edge_lights(extent_x: float, extent_y: float, height: float,
                 strip_width: float, inset: float) -> list[RectLight]:
    """Four LED strips along the mesh edges at `height`, each tilted 45
    degrees so its normal points inward and down at the surface; ordered
    left, bottom, right, top."""
    tilt = np.radians(45.0)
    c, s = np.cos(tilt), np.sin(tilt)
    lights = []
    # (edge midpoint xy, edge vector, horizontal inward direction)
    sides = [
        ((-inset, 0.5 * extent_y), (0.0, extent_y, 0.0), (1.0, 0.0)),
        ((0.5 * extent_x, -inset), (extent_x, 0.0, 0.0), (0.0, 1.0)),
        ((extent_x + inset, 0.5 * extent_y), (0.0, -extent_y, 0.0), (-1.0, 0.0)),
        ((0.5 * extent_x, extent_y + inset), (-extent_x, 0.0, 0.0), (0.0, -1.0)),
    ]
    for (mx, my), edge, (tx, ty) in sides:
        eu = np.asarray(edge, dtype=np.float64)
        n = np.array([c * tx, c * ty, -s])
        ev = strip_width * np.cross(n, eu / np.linalg.norm(eu))
        corner = np.array([mx - 0.5 * eu[0], my - 0.5 * eu[1], height]) - 0.5 * ev
        lights.append(RectLight(corner=tuple(corner), edge_u=tuple(eu),
                                edge_v=tuple(ev), radiance=(1.0, 1.0, 1.0)))
    return lights


def _colorize(lights, colors):
    return [replace(l, radiance=tuple(np.asarray(c, dtype=np.float64) / 255.0))
            for l, c in zip(lights, colors)]


GELSIGHT_COLORS = ((255, 40, 40), (40, 255, 40), (40, 40, 255), (255, 255, 255))
WHITE_COLORS = ((255, 255, 255),) * 4


def _make_profile(name, resolution, pitch, spp, colors, exposure):
    w, h = resolution
    ex, ey = w * pitch, h * pitch
    height = 0.45 * max(ex, ey)
    lights = _colorize(
        _edge_lights(ex, ey, height=0.12 * max(ex, ey),
                     strip_width=0.15 * max(ex, ey), inset=0.05 * max(ex, ey)),
        colors)
    return SensorProfile(name=name, resolution=resolution, pixel_pitch=pitch,
                         camera_height=height, lights=tuple(lights),
                         exposure=exposure, spp=spp)


PROFILES = {
    "gelsight": _make_profile("gelsight", (640, 480), 0.03125, 128,
                              GELSIGHT_COLORS, exposure=10.0),
    "slip-sensor": _make_profile("slip-sensor", (480, 480), 0.0375, 128,
                                 WHITE_COLORS, exposure=10.0),
    "gelsight-desk": _make_profile("gelsight-desk", (160, 120), 0.125, 32,
                                   GELSIGHT_COLORS, exposure=10.0),
    "slip-sensor-desk": _make_profile("slip-sensor-desk", (120, 120), 0.15, 32,
                                      WHITE_COLORS, exposure=10.0),
}


def get_profile(name: str) -> SensorProfile:
    try:
        return PROFILES[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown sensor profile {name!r}; available: "
            + ", ".join(sorted(PROFILES))) from None


def build_scene(mesh: HeightfieldMesh, texture: np.ndarray,
                profile: SensorProfile) -> Scene:
    """Wrap the base texture onto the heightfield via its UVs, place the
    profile lights and camera."""
    if texture is None:
        raise ConfigurationError("scene requires a base texture")
    extent_x = float(mesh.vertices[:, 0].max() - mesh.vertices[:, 0].min())
    extent_y = float(mesh.vertices[:, 1].max() - mesh.vertices[:, 1].min())
    camera = profile.camera_for(extent_x, extent_y)
    scene = Scene(camera, profile.resolution, exposure=profile.exposure)
    scene.set_texture(np.asarray(texture, dtype=np.float64))
    gel = scene.add_material(albedo=(1.0, 1.0, 1.0), textured=True)
    scene.add_triangles(mesh.vertices, mesh.triangles, mesh.normals,
                        mesh.uvs, gel)
    for light in profile.lights:
        scene.add_light(light)
    return scene


def load_texture(path) -> np.ndarray:
    """PNG -> float64 (h, w, 3) in [0, 1]."""
    with PILImage.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_png(image: np.ndarray, path) -> None:
    arr = np.asarray(image)
    if arr.dtype != np.uint8 or arr.ndim != 3 or arr.shape[2] != 3:
        raise RenderError("save_png expects uint8 (h, w, 3)")
    PILImage.fromarray(arr, mode="RGB").save(path, format="PNG")


def load_png(path) -> np.ndarray:
    with PILImage.open(path) as img:
        return np.asarray(img.convert("RGB")).copy()


def flat_texture(width: int = 16, height: int = 16, rgb=(128, 128, 128)) -> np.ndarray:
    tex = np.empty((height, width, 3), dtype=np.float64)
    tex[:] = np.asarray(rgb, dtype=np.float64) / 255.0
    return tex
