"""Tactile image rendering: path tracer, Phong baseline, sensor profiles."""
from .bvh import BVH, build_bvh
from .pathtrace import render_path_traced, tonemap
from .phong import render_phong
from .scene import (PROFILES, Camera, RectLight, Scene, SensorProfile,
                    build_scene, flat_texture, get_profile, load_png,
                    load_texture, save_png)

__all__ = [
    "BVH", "build_bvh", "render_path_traced", "render_phong", "tonemap",
    "PROFILES", "Camera", "RectLight", "Scene", "SensorProfile",
    "build_scene", "flat_texture", "get_profile", "load_png",
    "load_texture", "save_png",
]
