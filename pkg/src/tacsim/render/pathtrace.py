"""Unidirectional path tracer with next-event estimation.

Per-(pixel, sample) splitmix64 streams keyed on (seed, pixel, sample)
make the output bit-identical for any thread count or tile schedule.
Lambertian surfaces only (the elastomer is rendered at maximum
roughness): cosine-weighted bounces, balance-heuristic MIS between
light and BSDF sampling, Russian roulette after bounce 3. Radiance is
tone mapped by linear exposure, clamp and 8-bit quantization.
"""
from __future__ import annotations

import logging

import numpy as np
from numba import njit, prange

from .bvh import build_bvh
from .scene import Scene

log = logging.getLogger(__name__)

GOLD = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)
PIX = np.uint64(0xD1342543DE82EF95)
SMP = np.uint64(0xAF251AF3B0F025B5)

EPS_T = 1e-6
EPS_OFF = 1e-5


@njit(cache=True)
def _sm(state):
    state = state + GOLD
    z = state
    z = (z ^ (z >> np.uint64(30))) * MIX1
    z = (z ^ (z >> np.uint64(27))) * MIX2
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(cache=True)
def _randf(state):
    state, z = _sm(state)
    return state, (z >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def _stream(seed, pix, sample):
    st = (np.uint64(seed) + np.uint64(1)) * GOLD
    st = st ^ (np.uint64(pix) * PIX)
    st, _ = _sm(st)
    st = st ^ (np.uint64(sample) * SMP)
    st, _ = _sm(st)
    return st


@njit(cache=True, error_model="numpy")
def _closest_hit(ox, oy, oz, dx, dy, dz, tmax, stack,
                 node_min, node_max, leaf_start, leaf_count, tri_order,
                 first_leaf, v0, e1, e2):
    """Returns (t, triangle index or -1, bary u, bary v)."""
    ix = 1.0 / dx
    iy = 1.0 / dy
    iz = 1.0 / dz
    best_t = tmax
    best_tri = -1
    best_u = 0.0
    best_v = 0.0
    sp = 1
    stack[0] = 0
    while sp > 0:
        sp -= 1
        node = stack[sp]
        # sign-ordered slabs; empty boxes (min > max) fail automatically
        if ix >= 0.0:
            tlo = (node_min[node, 0] - ox) * ix
            thi = (node_max[node, 0] - ox) * ix
        else:
            tlo = (node_max[node, 0] - ox) * ix
            thi = (node_min[node, 0] - ox) * ix
        if iy >= 0.0:
            tlo = max(tlo, (node_min[node, 1] - oy) * iy)
            thi = min(thi, (node_max[node, 1] - oy) * iy)
        else:
            tlo = max(tlo, (node_max[node, 1] - oy) * iy)
            thi = min(thi, (node_min[node, 1] - oy) * iy)
        if iz >= 0.0:
            tlo = max(tlo, (node_min[node, 2] - oz) * iz)
            thi = min(thi, (node_max[node, 2] - oz) * iz)
        else:
            tlo = max(tlo, (node_max[node, 2] - oz) * iz)
            thi = min(thi, (node_min[node, 2] - oz) * iz)
        if tlo > thi or thi < EPS_T or tlo > best_t:
            continue
        if node >= first_leaf:
            leaf = node - first_leaf
            s = leaf_start[leaf]
            for k in range(s, s + leaf_count[leaf]):
                tri = tri_order[k]
                e1x, e1y, e1z = e1[tri, 0], e1[tri, 1], e1[tri, 2]
                e2x, e2y, e2z = e2[tri, 0], e2[tri, 1], e2[tri, 2]
                px = dy * e2z - dz * e2y
                py = dz * e2x - dx * e2z
                pz = dx * e2y - dy * e2x
                det = e1x * px + e1y * py + e1z * pz
                if -1e-14 < det < 1e-14:
                    continue
                inv_det = 1.0 / det
                tx = ox - v0[tri, 0]
                ty = oy - v0[tri, 1]
                tz = oz - v0[tri, 2]
                u = (tx * px + ty * py + tz * pz) * inv_det
                if u < -1e-9 or u > 1.0 + 1e-9:
                    continue
                qx = ty * e1z - tz * e1y
                qy = tz * e1x - tx * e1z
                qz = tx * e1y - ty * e1x
                v = (dx * qx + dy * qy + dz * qz) * inv_det
                if v < -1e-9 or u + v > 1.0 + 1e-9:
                    continue
                t = (e2x * qx + e2y * qy + e2z * qz) * inv_det
                if EPS_T < t < best_t:
                    best_t = t
                    best_tri = tri
                    best_u = u
                    best_v = v
        else:
            stack[sp] = 2 * node + 1
            stack[sp + 1] = 2 * node + 2
            sp += 2
    return best_t, best_tri, best_u, best_v


@njit(cache=True, error_model="numpy")
def _occluded(ox, oy, oz, dx, dy, dz, tmax, stack,
              node_min, node_max, leaf_start, leaf_count, tri_order,
              first_leaf, v0, e1, e2):
    ix = 1.0 / dx
    iy = 1.0 / dy
    iz = 1.0 / dz
    sp = 1
    stack[0] = 0
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if ix >= 0.0:
            tlo = (node_min[node, 0] - ox) * ix
            thi = (node_max[node, 0] - ox) * ix
        else:
            tlo = (node_max[node, 0] - ox) * ix
            thi = (node_min[node, 0] - ox) * ix
        if iy >= 0.0:
            tlo = max(tlo, (node_min[node, 1] - oy) * iy)
            thi = min(thi, (node_max[node, 1] - oy) * iy)
        else:
            tlo = max(tlo, (node_max[node, 1] - oy) * iy)
            thi = min(thi, (node_min[node, 1] - oy) * iy)
        if iz >= 0.0:
            tlo = max(tlo, (node_min[node, 2] - oz) * iz)
            thi = min(thi, (node_max[node, 2] - oz) * iz)
        else:
            tlo = max(tlo, (node_max[node, 2] - oz) * iz)
            thi = min(thi, (node_min[node, 2] - oz) * iz)
        if tlo > thi or thi < EPS_T or tlo > tmax:
            continue
        if node >= first_leaf:
            leaf = node - first_leaf
            s = leaf_start[leaf]
            for k in range(s, s + leaf_count[leaf]):
                tri = tri_order[k]
                e1x, e1y, e1z = e1[tri, 0], e1[tri, 1], e1[tri, 2]
                e2x, e2y, e2z = e2[tri, 0], e2[tri, 1], e2[tri, 2]
                px = dy * e2z - dz * e2y
                py = dz * e2x - dx * e2z
                pz = dx * e2y - dy * e2x
                det = e1x * px + e1y * py + e1z * pz
                if -1e-14 < det < 1e-14:
                    continue
                inv_det = 1.0 / det
                tx = ox - v0[tri, 0]
                ty = oy - v0[tri, 1]
                tz = oz - v0[tri, 2]
                u = (tx * px + ty * py + tz * pz) * inv_det
                if u < -1e-9 or u > 1.0 + 1e-9:
                    continue
                qx = ty * e1z - tz * e1y
                qy = tz * e1x - tx * e1z
                qz = tx * e1y - ty * e1x
                v = (dx * qx + dy * qy + dz * qz) * inv_det
                if v < -1e-9 or u + v > 1.0 + 1e-9:
                    continue
                t = (e2x * qx + e2y * qy + e2z * qz) * inv_det
                if EPS_T < t < tmax:
                    return True
        else:
            stack[sp] = 2 * node + 1
            stack[sp + 1] = 2 * node + 2
            sp += 2
    return False


@njit(cache=True)
def _texel(u, v, texture):
    """Nearest-neighbor fetch; UV clamped to [0, 1]."""
    th = texture.shape[0]
    tw = texture.shape[1]
    uu = min(max(u, 0.0), 1.0)
    vv = min(max(v, 0.0), 1.0)
    tx = int(uu * (tw - 1) + 0.5)
    ty = int(vv * (th - 1) + 0.5)
    return texture[ty, tx, 0], texture[ty, tx, 1], texture[ty, tx, 2]


@njit(cache=True)
def _surface_albedo(mat, u, v, mat_albedo, mat_textured, texture):
    ar = mat_albedo[mat, 0]
    ag = mat_albedo[mat, 1]
    ab = mat_albedo[mat, 2]
    if mat_textured[mat]:
        t_r, t_g, t_b = _texel(u, v, texture)
        ar *= t_r
        ag *= t_g
        ab *= t_b
    return ar, ag, ab


@njit(cache=True, parallel=True, error_model="numpy")
def _pt_kernel(width, height, cam_px, cam_py, cam_pz,
               fx, fy, fz, rx, ry, rz, ux, uy, uz, tan_h, tan_v,
               spp, max_bounces, seed, jitter,
               v0, e1, e2, tri_n, tri_uv, tri_mat, tri_light,
               mat_albedo, mat_emission, mat_textured, texture,
               l_corner, l_eu, l_ev, l_rad, l_n, l_area,
               node_min, node_max, leaf_start, leaf_count, tri_order,
               first_leaf, out_sum, out_sumsq, out_rej):
    n_lights = l_area.shape[0]
    npix = width * height
    for pix in prange(npix):
        row = pix // width
        col = pix % width
        stack = np.empty(64, dtype=np.int64)
        s_r = 0.0
        s_g = 0.0
        s_b = 0.0
        q_r = 0.0
        q_g = 0.0
        q_b = 0.0
        rejected = 0
        for smp in range(spp):
            state = _stream(seed, pix, smp)
            if jitter:
                state, jx = _randf(state)
                state, jy = _randf(state)
            else:
                jx = 0.5
                jy = 0.5
            px = (2.0 * (col + jx) / width - 1.0) * tan_h
            py = (2.0 * (row + jy) / height - 1.0) * tan_v
            dx = fx + px * rx + py * ux
            dy = fy + px * ry + py * uy
            dz = fz + px * rz + py * uz
            dn = 1.0 / np.sqrt(dx * dx + dy * dy + dz * dz)
            dx *= dn
            dy *= dn
            dz *= dn
            ox, oy, oz = cam_px, cam_py, cam_pz

            rad_r = 0.0
            rad_g = 0.0
            rad_b = 0.0
            b_r = 1.0
            b_g = 1.0
            b_b = 1.0
            prev_pdf = 0.0
            first = True
            for bounce in range(max_bounces):
                t, tri, bu, bv = _closest_hit(
                    ox, oy, oz, dx, dy, dz, 1e30, stack,
                    node_min, node_max, leaf_start, leaf_count, tri_order,
                    first_leaf, v0, e1, e2)
                if tri < 0:
                    break
                hx = ox + t * dx
                hy = oy + t * dy
                hz = oz + t * dz
                w0 = 1.0 - bu - bv
                nx = w0 * tri_n[tri, 0, 0] + bu * tri_n[tri, 1, 0] + bv * tri_n[tri, 2, 0]
                ny = w0 * tri_n[tri, 0, 1] + bu * tri_n[tri, 1, 1] + bv * tri_n[tri, 2, 1]
                nz = w0 * tri_n[tri, 0, 2] + bu * tri_n[tri, 1, 2] + bv * tri_n[tri, 2, 2]
                nn = 1.0 / np.sqrt(nx * nx + ny * ny + nz * nz)
                nx *= nn
                ny *= nn
                nz *= nn
                mat = tri_mat[tri]
                uu = w0 * tri_uv[tri, 0, 0] + bu * tri_uv[tri, 1, 0] + bv * tri_uv[tri, 2, 0]
                vv = w0 * tri_uv[tri, 0, 1] + bu * tri_uv[tri, 1, 1] + bv * tri_uv[tri, 2, 1]

                em_r = mat_emission[mat, 0]
                em_g = mat_emission[mat, 1]
                em_b = mat_emission[mat, 2]
                if (em_r > 0.0 or em_g > 0.0 or em_b > 0.0) and \
                        (dx * nx + dy * ny + dz * nz) < 0.0:
                    if mat_textured[mat]:
                        t_r, t_g, t_b = _texel(uu, vv, texture)
                        em_r *= t_r
                        em_g *= t_g
                        em_b *= t_b
                    if first:
                        mis = 1.0
                    else:
                        lid = tri_light[tri]
                        if lid >= 0 and n_lights > 0:
                            cos_l = -(dx * l_n[lid, 0] + dy * l_n[lid, 1]
                                      + dz * l_n[lid, 2])
                            if cos_l > 1e-9:
                                p_light = (t * t) / (cos_l * l_area[lid] * n_lights)
                                mis = prev_pdf / (prev_pdf + p_light)
                            else:
                                mis = 1.0
                        else:
                            mis = 1.0
                    rad_r += b_r * em_r * mis
                    rad_g += b_g * em_g * mis
                    rad_b += b_b * em_b * mis

                a_r, a_g, a_b = _surface_albedo(mat, uu, vv, mat_albedo,
                                                mat_textured, texture)
                if a_r <= 0.0 and a_g <= 0.0 and a_b <= 0.0:
                    break
                # shade the side the ray arrived on
                if dx * nx + dy * ny + dz * nz > 0.0:
                    nx = -nx
                    ny = -ny
                    nz = -nz

                # next-event estimation
                if n_lights > 0:
                    state, xi = _randf(state)
                    lid = int(xi * n_lights)
                    if lid >= n_lights:
                        lid = n_lights - 1
                    state, su = _randf(state)
                    state, sv = _randf(state)
                    lx = l_corner[lid, 0] + su * l_eu[lid, 0] + sv * l_ev[lid, 0]
                    ly = l_corner[lid, 1] + su * l_eu[lid, 1] + sv * l_ev[lid, 1]
                    lz = l_corner[lid, 2] + su * l_eu[lid, 2] + sv * l_ev[lid, 2]
                    wx = lx - hx
                    wy = ly - hy
                    wz = lz - hz
                    dist2 = wx * wx + wy * wy + wz * wz
                    dist = np.sqrt(dist2)
                    if dist > 1e-9:
                        wxn = wx / dist
                        wyn = wy / dist
                        wzn = wz / dist
                        cos_s = nx * wxn + ny * wyn + nz * wzn
                        cos_l = -(wxn * l_n[lid, 0] + wyn * l_n[lid, 1]
                                  + wzn * l_n[lid, 2])
                        if cos_s > 1e-9 and cos_l > 1e-9:
                            sx = hx + nx * EPS_OFF
                            sy = hy + ny * EPS_OFF
                            sz = hz + nz * EPS_OFF
                            if not _occluded(sx, sy, sz, wxn, wyn, wzn,
                                             dist * (1.0 - 1e-4), stack,
                                             node_min, node_max, leaf_start,
                                             leaf_count, tri_order, first_leaf,
                                             v0, e1, e2):
                                p_light = dist2 / (cos_l * l_area[lid] * n_lights)
                                p_bsdf = cos_s / np.pi
                                mis = p_light / (p_light + p_bsdf)
                                scale = cos_s / np.pi / p_light * mis
                                rad_r += b_r * a_r * l_rad[lid, 0] * scale
                                rad_g += b_g * a_g * l_rad[lid, 1] * scale
                                rad_b += b_b * a_b * l_rad[lid, 2] * scale

                # russian roulette after bounce 3
                if bounce >= 3:
                    q = b_r
                    if b_g > q:
                        q = b_g
                    if b_b > q:
                        q = b_b
                    if q > 0.95:
                        q = 0.95
                    elif q < 0.05:
                        q = 0.05
                    state, xi = _randf(state)
                    if xi >= q:
                        break
                    b_r /= q
                    b_g /= q
                    b_b /= q

                # cosine-weighted bounce
                if abs(nx) > 0.9:
                    ax, ay, az = 0.0, 1.0, 0.0
                else:
                    ax, ay, az = 1.0, 0.0, 0.0
                txv = ny * az - nz * ay
                tyv = nz * ax - nx * az
                tzv = nx * ay - ny * ax
                tn = 1.0 / np.sqrt(txv * txv + tyv * tyv + tzv * tzv)
                txv *= tn
                tyv *= tn
                tzv *= tn
                bxv = ny * tzv - nz * tyv
                byv = nz * txv - nx * tzv
                bzv = nx * tyv - ny * txv
                state, x1 = _randf(state)
                state, x2 = _randf(state)
                phi = 2.0 * np.pi * x1
                sr = np.sqrt(x2)
                cz = np.sqrt(max(1.0 - x2, 0.0))
                dx = txv * np.cos(phi) * sr + bxv * np.sin(phi) * sr + nx * cz
                dy = tyv * np.cos(phi) * sr + byv * np.sin(phi) * sr + ny * cz
                dz = tzv * np.cos(phi) * sr + bzv * np.sin(phi) * sr + nz * cz
                prev_pdf = cz / np.pi
                if prev_pdf <= 0.0:
                    break
                b_r *= a_r
                b_g *= a_g
                b_b *= a_b
                ox = hx + nx * EPS_OFF
                oy = hy + ny * EPS_OFF
                oz = hz + nz * EPS_OFF
                first = False

            if np.isfinite(rad_r) and np.isfinite(rad_g) and np.isfinite(rad_b):
                s_r += rad_r
                s_g += rad_g
                s_b += rad_b
                q_r += rad_r * rad_r
                q_g += rad_g * rad_g
                q_b += rad_b * rad_b
            else:
                rejected += 1
        out_sum[pix, 0] = s_r
        out_sum[pix, 1] = s_g
        out_sum[pix, 2] = s_b
        out_sumsq[pix, 0] = q_r
        out_sumsq[pix, 1] = q_g
        out_sumsq[pix, 2] = q_b
        out_rej[pix] = rejected


def _camera_arrays(scene: Scene):
    cam = scene.camera
    f, r, u = cam.basis()
    w, h = scene.resolution
    tan_v = np.tan(np.radians(cam.fov_v_degrees) * 0.5)
    tan_h = tan_v * w / h
    return f, r, u, tan_h, tan_v


def _scene_bvh(scene: Scene, pack):
    bvh = getattr(scene, "_bvh", None)
    if bvh is None:
        bvh = build_bvh(pack["v0"], pack["e1"], pack["e2"])
        scene._bvh = bvh
    return bvh


def tonemap(radiance: np.ndarray, exposure: float,
            gamma: float = 1.0) -> np.ndarray:
    scaled = np.clip(radiance * exposure, 0.0, 1.0)
    if gamma != 1.0:
        scaled = scaled ** (1.0 / gamma)
    return np.rint(scaled * 255.0).astype(np.uint8)


def render_path_traced(scene: Scene, samples_per_pixel: int = 128,
                       max_bounces: int = 4, seed: int = 0,
                       jitter: bool = True, gamma: float = 1.0,
                       return_stats: bool = False):
    """Render the scene; returns a uint8 (h, w, 3) image, plus a stats
    dict (mean per-pixel variance of the pixel estimate, rejected sample
    count, raw radiance) when return_stats is set."""
    if samples_per_pixel < 1 or max_bounces < 1:
        raise ValueError("samples_per_pixel and max_bounces must be >= 1")
    pack = scene.packed()
    bvh = _scene_bvh(scene, pack)
    f, r, u, tan_h, tan_v = _camera_arrays(scene)
    w, h = scene.resolution
    npix = w * h
    out_sum = np.zeros((npix, 3))
    out_sumsq = np.zeros((npix, 3))
    out_rej = np.zeros(npix, dtype=np.int64)
    cam = scene.camera
    _pt_kernel(w, h, cam.position[0], cam.position[1], cam.position[2],
               f[0], f[1], f[2], r[0], r[1], r[2], u[0], u[1], u[2],
               tan_h, tan_v, samples_per_pixel, max_bounces, seed, jitter,
               pack["v0"], pack["e1"], pack["e2"], pack["normals"],
               pack["uvs"], pack["mat"], pack["light_id"],
               pack["mat_albedo"], pack["mat_emission"],
               pack["mat_textured"], pack["texture"],
               pack["light_corner"], pack["light_eu"], pack["light_ev"],
               pack["light_radiance"], pack["light_normal"],
               pack["light_area"],
               bvh.node_min, bvh.node_max, bvh.leaf_start, bvh.leaf_count,
               bvh.tri_order, bvh.first_leaf, out_sum, out_sumsq, out_rej)
    counts = np.maximum(samples_per_pixel - out_rej, 1)[:, None]
    mean = out_sum / counts
    rejected = int(out_rej.sum())
    if rejected:
        log.warning("path tracer rejected %d non-finite samples", rejected)
    image = tonemap(mean.reshape(h, w, 3), scene.exposure, gamma)
    if not return_stats:
        return image
    n = counts.astype(np.float64)
    sample_var = np.maximum(out_sumsq - n * mean ** 2, 0.0) / np.maximum(n - 1, 1)
    pixel_var = sample_var / n  # variance of the per-pixel mean estimate
    stats = {
        "mean_pixel_variance": float(pixel_var.mean()),
        "rejected_samples": rejected,
        "radiance": mean.reshape(h, w, 3),
    }
    return image, stats
