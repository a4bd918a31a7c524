"""Phong baseline renderer.

One primary ray per pixel through the pixel center, shading from the
interpolated normal: ambient plus per-light diffuse and specular terms
with lights collapsed to points at their rectangle centers. No shadow
rays and no interreflection, mirroring the contrast drawn against the
path-traced pipeline.
"""
from __future__ import annotations

import numpy as np
from numba import njit, prange

from .pathtrace import (_camera_arrays, _closest_hit, _scene_bvh,
                        _surface_albedo, tonemap)
from .scene import Scene


@njit(cache=True, parallel=True, error_model="numpy")
def _phong_kernel(width, height, cam_px, cam_py, cam_pz,
                  fx, fy, fz, rx, ry, rz, ux, uy, uz, tan_h, tan_v,
                  ambient, k_spec, shininess,
                  v0, e1, e2, tri_n, tri_uv, tri_mat,
                  mat_albedo, mat_textured, texture,
                  l_center, l_rad, l_n, l_area,
                  node_min, node_max, leaf_start, leaf_count, tri_order,
                  first_leaf, out):
    n_lights = l_area.shape[0]
    npix = width * height
    for pix in prange(npix):
        row = pix // width
        col = pix % width
        stack = np.empty(64, dtype=np.int64)
        px = (2.0 * (col + 0.5) / width - 1.0) * tan_h
        py = (2.0 * (row + 0.5) / height - 1.0) * tan_v
        dx = fx + px * rx + py * ux
        dy = fy + px * ry + py * uy
        dz = fz + px * rz + py * uz
        dn = 1.0 / np.sqrt(dx * dx + dy * dy + dz * dz)
        dx *= dn
        dy *= dn
        dz *= dn
        t, tri, bu, bv = _closest_hit(
            cam_px, cam_py, cam_pz, dx, dy, dz, 1e30, stack,
            node_min, node_max, leaf_start, leaf_count, tri_order,
            first_leaf, v0, e1, e2)
        if tri < 0:
            out[pix, 0] = 0.0
            out[pix, 1] = 0.0
            out[pix, 2] = 0.0
            continue
        hx = cam_px + t * dx
        hy = cam_py + t * dy
        hz = cam_pz + t * dz
        w0 = 1.0 - bu - bv
        nx = w0 * tri_n[tri, 0, 0] + bu * tri_n[tri, 1, 0] + bv * tri_n[tri, 2, 0]
        ny = w0 * tri_n[tri, 0, 1] + bu * tri_n[tri, 1, 1] + bv * tri_n[tri, 2, 1]
        nz = w0 * tri_n[tri, 0, 2] + bu * tri_n[tri, 1, 2] + bv * tri_n[tri, 2, 2]
        nn = 1.0 / np.sqrt(nx * nx + ny * ny + nz * nz)
        nx *= nn
        ny *= nn
        nz *= nn
        if dx * nx + dy * ny + dz * nz > 0.0:
            nx = -nx
            ny = -ny
            nz = -nz
        uu = w0 * tri_uv[tri, 0, 0] + bu * tri_uv[tri, 1, 0] + bv * tri_uv[tri, 2, 0]
        vv = w0 * tri_uv[tri, 0, 1] + bu * tri_uv[tri, 1, 1] + bv * tri_uv[tri, 2, 1]
        mat = tri_mat[tri]
        a_r, a_g, a_b = _surface_albedo(mat, uu, vv, mat_albedo,
                                        mat_textured, texture)
        c_r = ambient * a_r
        c_g = ambient * a_g
        c_b = ambient * a_b
        for lid in range(n_lights):
            wx = l_center[lid, 0] - hx
            wy = l_center[lid, 1] - hy
            wz = l_center[lid, 2] - hz
            dist2 = wx * wx + wy * wy + wz * wz
            dist = np.sqrt(dist2)
            if dist < 1e-9:
                continue
            wxn = wx / dist
            wyn = wy / dist
            wzn = wz / dist
            cos_s = nx * wxn + ny * wyn + nz * wzn
            cos_l = -(wxn * l_n[lid, 0] + wyn * l_n[lid, 1] + wzn * l_n[lid, 2])
            if cos_s <= 0.0 or cos_l <= 0.0:
                continue
            # same radiometric scale as one-point direct-light quadrature
            geom = l_area[lid] * cos_l / dist2
            diff = cos_s / np.pi * geom
            c_r += a_r * l_rad[lid, 0] * diff
            c_g += a_g * l_rad[lid, 1] * diff
            c_b += a_b * l_rad[lid, 2] * diff
            if k_spec > 0.0:
                refx = 2.0 * cos_s * nx - wxn
                refy = 2.0 * cos_s * ny - wyn
                refz = 2.0 * cos_s * nz - wzn
                rv = -(refx * dx + refy * dy + refz * dz)
                if rv > 0.0:
                    spec = k_spec * rv ** shininess * geom
                    c_r += l_rad[lid, 0] * spec
                    c_g += l_rad[lid, 1] * spec
                    c_b += l_rad[lid, 2] * spec
        out[pix, 0] = c_r
        out[pix, 1] = c_g
        out[pix, 2] = c_b


def render_phong(scene: Scene, ambient: float = 0.0, k_spec: float = 0.2,
                 shininess: float = 16.0, gamma: float = 1.0) -> np.ndarray:
    """Deterministic single-ray-per-pixel Phong shading."""
    pack = scene.packed()
    bvh = _scene_bvh(scene, pack)
    f, r, u, tan_h, tan_v = _camera_arrays(scene)
    w, h = scene.resolution
    out = np.zeros((w * h, 3))
    centers = (pack["light_corner"] + 0.5 * pack["light_eu"]
               + 0.5 * pack["light_ev"])
    cam = scene.camera
    _phong_kernel(w, h, cam.position[0], cam.position[1], cam.position[2],
                  f[0], f[1], f[2], r[0], r[1], r[2], u[0], u[1], u[2],
                  tan_h, tan_v, ambient, k_spec, shininess,
                  pack["v0"], pack["e1"], pack["e2"], pack["normals"],
                  pack["uvs"], pack["mat"],
                  pack["mat_albedo"], pack["mat_textured"], pack["texture"],
                  centers, pack["light_radiance"], pack["light_normal"],
                  pack["light_area"],
                  bvh.node_min, bvh.node_max, bvh.leaf_start, bvh.leaf_count,
                  bvh.tri_order, bvh.first_leaf, out)
    return tonemap(out.reshape(h, w, 3), scene.exposure, gamma)
