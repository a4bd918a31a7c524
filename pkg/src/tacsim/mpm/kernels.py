"""Compiled transfer kernels for the MPM cycle.

P2G is gather-style: particles are binned by base cell with a counting
sort, then each grid node walks the 27 bins that can reach it and
accumulates contributions in bin order. A node is owned by exactly one
thread and its accumulation order never depends on the schedule, so
results are bit-identical for any thread count.

Faults are reported through a 2-slot int64 array (code, particle); any
racing writes all carry real faults, so last-write-wins is acceptable.
"""
from __future__ import annotations

import numpy as np
from numba import njit, prange

FAULT_INVERTED = 1
FAULT_NONFINITE = 2
FAULT_ESCAPED = 3
FAULT_CFL = 4

FAULT_MESSAGES = {
    FAULT_INVERTED: "deformation gradient inverted (det F <= 0)",
    FAULT_NONFINITE: "non-finite particle state",
    FAULT_ESCAPED: "particle left the simulation domain",
    FAULT_CFL: "per-step displacement exceeded one grid cell",
}


@njit(cache=True)
def _polar_rotation(f00, f01, f02, f10, f11, f12, f20, f21, f22):
    """Rotation factor of F (det F > 0) via the Newton iteration
    X <- (X + X^-T) / 2, unrolled to scalars so callers stay
    allocation-free."""
    x00, x01, x02 = f00, f01, f02
    x10, x11, x12 = f10, f11, f12
    x20, x21, x22 = f20, f21, f22
    for _ in range(40):
        c00 = x11 * x22 - x12 * x21
        c01 = x12 * x20 - x10 * x22
        c02 = x10 * x21 - x11 * x20
        c10 = x02 * x21 - x01 * x22
        c11 = x00 * x22 - x02 * x20
        c12 = x01 * x20 - x00 * x21
        c20 = x01 * x12 - x02 * x11
        c21 = x02 * x10 - x00 * x12
        c22 = x00 * x11 - x01 * x10
        det = x00 * c00 + x01 * c01 + x02 * c02
        inv = 1.0 / det
        y00 = 0.5 * (x00 + c00 * inv)
        y01 = 0.5 * (x01 + c01 * inv)
        y02 = 0.5 * (x02 + c02 * inv)
        y10 = 0.5 * (x10 + c10 * inv)
        y11 = 0.5 * (x11 + c11 * inv)
        y12 = 0.5 * (x12 + c12 * inv)
        y20 = 0.5 * (x20 + c20 * inv)
        y21 = 0.5 * (x21 + c21 * inv)
        y22 = 0.5 * (x22 + c22 * inv)
        diff = (abs(y00 - x00) + abs(y01 - x01) + abs(y02 - x02)
                + abs(y10 - x10) + abs(y11 - x11) + abs(y12 - x12)
                + abs(y20 - x20) + abs(y21 - x21) + abs(y22 - x22))
        x00, x01, x02 = y00, y01, y02
        x10, x11, x12 = y10, y11, y12
        x20, x21, x22 = y20, y21, y22
        if diff < 1e-13:
            break
    return x00, x01, x02, x10, x11, x12, x20, x21, x22


@njit(cache=True)
def kirchhoff_stress(F, mu, lam):
    """Fixed-corotated Kirchhoff stress S = 2 mu (F - R) F^T + lam J (J - 1) I."""
    f00, f01, f02 = F[0, 0], F[0, 1], F[0, 2]
    f10, f11, f12 = F[1, 0], F[1, 1], F[1, 2]
    f20, f21, f22 = F[2, 0], F[2, 1], F[2, 2]
    J = (f00 * (f11 * f22 - f12 * f21)
         + f01 * (f12 * f20 - f10 * f22)
         + f02 * (f10 * f21 - f11 * f20))
    out = np.empty((3, 3))
    r00, r01, r02, r10, r11, r12, r20, r21, r22 = _polar_rotation(
        f00, f01, f02, f10, f11, f12, f20, f21, f22)
    a00, a01, a02 = f00 - r00, f01 - r01, f02 - r02
    a10, a11, a12 = f10 - r10, f11 - r11, f12 - r12
    a20, a21, a22 = f20 - r20, f21 - r21, f22 - r22
    two_mu = 2.0 * mu
    vol = lam * J * (J - 1.0)
    out[0, 0] = two_mu * (a00 * f00 + a01 * f01 + a02 * f02) + vol
    out[0, 1] = two_mu * (a00 * f10 + a01 * f11 + a02 * f12)
    out[0, 2] = two_mu * (a00 * f20 + a01 * f21 + a02 * f22)
    out[1, 0] = two_mu * (a10 * f00 + a11 * f01 + a12 * f02)
    out[1, 1] = two_mu * (a10 * f10 + a11 * f11 + a12 * f12) + vol
    out[1, 2] = two_mu * (a10 * f20 + a11 * f21 + a12 * f22)
    out[2, 0] = two_mu * (a20 * f00 + a21 * f01 + a22 * f02)
    out[2, 1] = two_mu * (a20 * f10 + a21 * f11 + a22 * f12)
    out[2, 2] = two_mu * (a20 * f20 + a21 * f21 + a22 * f22) + vol
    return out


@njit(cache=True, parallel=True)
def p2g_prepare(x, v, m, C, F, V0, body, grid_width, dt, mu, lam,
                nx, ny, nz, base, wts, mv, Q, bin_id, fault):
    """Per-particle pass ahead of the gather: base cell, the three
    per-axis quadratic B-spline weights, momentum, and the fused affine
    plus stress matrix Q = m C - (4 dt / W^2) V0 S."""
    inv_w = 1.0 / grid_width
    coeff = 4.0 * dt / (grid_width * grid_width)
    for p in prange(x.shape[0]):
        ok = True
        for d in range(3):
            xd = x[p, d] * inv_w
            if not np.isfinite(xd):
                fault[0] = FAULT_NONFINITE
                fault[1] = p
                ok = False
                break
            b = int(np.floor(xd - 0.5))
            nd = nx if d == 0 else (ny if d == 1 else nz)
            if b < 0 or b > nd - 3:
                fault[0] = FAULT_ESCAPED
                fault[1] = p
                ok = False
                break
            fx = xd - b
            base[p, d] = b
            wts[p, d, 0] = 0.5 * (1.5 - fx) ** 2
            wts[p, d, 1] = 0.75 - (fx - 1.0) ** 2
            wts[p, d, 2] = 0.5 * (fx - 0.5) ** 2
        if not ok:
            continue
        bin_id[p] = (base[p, 0] * ny + base[p, 1]) * nz + base[p, 2]
        for d in range(3):
            mv[p, d] = m[p] * v[p, d]

        if body[p] == 0:
            f00, f01, f02 = F[p, 0, 0], F[p, 0, 1], F[p, 0, 2]
            f10, f11, f12 = F[p, 1, 0], F[p, 1, 1], F[p, 1, 2]
            f20, f21, f22 = F[p, 2, 0], F[p, 2, 1], F[p, 2, 2]
            J = (f00 * (f11 * f22 - f12 * f21)
                 + f01 * (f12 * f20 - f10 * f22)
                 + f02 * (f10 * f21 - f11 * f20))
            if not (J > 0.0):
                fault[0] = FAULT_INVERTED
                fault[1] = p
                continue
            r00, r01, r02, r10, r11, r12, r20, r21, r22 = _polar_rotation(
                f00, f01, f02, f10, f11, f12, f20, f21, f22)
            a00, a01, a02 = f00 - r00, f01 - r01, f02 - r02
            a10, a11, a12 = f10 - r10, f11 - r11, f12 - r12
            a20, a21, a22 = f20 - r20, f21 - r21, f22 - r22
            two_mu = 2.0 * mu
            vol = lam * J * (J - 1.0)
            s00 = two_mu * (a00 * f00 + a01 * f01 + a02 * f02) + vol
            s01 = two_mu * (a00 * f10 + a01 * f11 + a02 * f12)
            s02 = two_mu * (a00 * f20 + a01 * f21 + a02 * f22)
            s10 = two_mu * (a10 * f00 + a11 * f01 + a12 * f02)
            s11 = two_mu * (a10 * f10 + a11 * f11 + a12 * f12) + vol
            s12 = two_mu * (a10 * f20 + a11 * f21 + a12 * f22)
            s20 = two_mu * (a20 * f00 + a21 * f01 + a22 * f02)
            s21 = two_mu * (a20 * f10 + a21 * f11 + a22 * f12)
            s22 = two_mu * (a20 * f20 + a21 * f21 + a22 * f22) + vol
            k = coeff * V0[p]
            Q[p, 0, 0] = m[p] * C[p, 0, 0] - k * s00
            Q[p, 0, 1] = m[p] * C[p, 0, 1] - k * s01
            Q[p, 0, 2] = m[p] * C[p, 0, 2] - k * s02
            Q[p, 1, 0] = m[p] * C[p, 1, 0] - k * s10
            Q[p, 1, 1] = m[p] * C[p, 1, 1] - k * s11
            Q[p, 1, 2] = m[p] * C[p, 1, 2] - k * s12
            Q[p, 2, 0] = m[p] * C[p, 2, 0] - k * s20
            Q[p, 2, 1] = m[p] * C[p, 2, 1] - k * s21
            Q[p, 2, 2] = m[p] * C[p, 2, 2] - k * s22
        else:
            for i in range(3):
                for j in range(3):
                    Q[p, i, j] = m[p] * C[p, i, j]


@njit(cache=True)
def counting_sort(bin_id, nbins, counts, starts, cursor, order):
    counts[:nbins] = 0
    for p in range(bin_id.shape[0]):
        counts[bin_id[p]] += 1
    s = 0
    for b in range(nbins):
        starts[b] = s
        cursor[b] = s
        s += counts[b]
    for p in range(bin_id.shape[0]):
        b = bin_id[p]
        order[cursor[b]] = p
        cursor[b] += 1


@njit(cache=True, parallel=True)
def p2g_gather(x, m, mv, Q, base, wts, starts, counts, order,
               grid_width, nx, ny, nz, grid_m, grid_mom):
    """Node-owned accumulation of Eq. 1-4: grid mass and combined
    momentum (inertial + affine + elastic impulse)."""
    nyz = ny * nz
    for node in prange(nx * nyz):
        ix = node // nyz
        iy = (node % nyz) // nz
        iz = node % nz
        gx = ix * grid_width
        gy = iy * grid_width
        gz = iz * grid_width
        acc_m = 0.0
        acc0 = 0.0
        acc1 = 0.0
        acc2 = 0.0
        bx_lo = ix - 2 if ix - 2 > 0 else 0
        bx_hi = ix if ix < nx - 3 else nx - 3
        by_lo = iy - 2 if iy - 2 > 0 else 0
        by_hi = iy if iy < ny - 3 else ny - 3
        bz_lo = iz - 2 if iz - 2 > 0 else 0
        bz_hi = iz if iz < nz - 3 else nz - 3
        for bx in range(bx_lo, bx_hi + 1):
            for by in range(by_lo, by_hi + 1):
                for bz in range(bz_lo, bz_hi + 1):
                    b = (bx * ny + by) * nz + bz
                    st = starts[b]
                    for k in range(st, st + counts[b]):
                        p = order[k]
                        w = (wts[p, 0, ix - bx]
                             * wts[p, 1, iy - by]
                             * wts[p, 2, iz - bz])
                        dx0 = gx - x[p, 0]
                        dx1 = gy - x[p, 1]
                        dx2 = gz - x[p, 2]
                        acc_m += w * m[p]
                        acc0 += w * (mv[p, 0] + Q[p, 0, 0] * dx0
                                     + Q[p, 0, 1] * dx1 + Q[p, 0, 2] * dx2)
                        acc1 += w * (mv[p, 1] + Q[p, 1, 0] * dx0
                                     + Q[p, 1, 1] * dx1 + Q[p, 1, 2] * dx2)
                        acc2 += w * (mv[p, 2] + Q[p, 2, 0] * dx0
                                     + Q[p, 2, 1] * dx1 + Q[p, 2, 2] * dx2)
        grid_m[node] = acc_m
        grid_mom[node, 0] = acc0
        grid_mom[node, 1] = acc1
        grid_mom[node, 2] = acc2


@njit(cache=True, parallel=True)
def grid_velocity(grid_m, grid_mom, nx, ny, nz, margin, grid_v):
    """Eq. 5 momentum-to-velocity with empty-node guard, then sticky
    zeroing of every node within `margin` of a domain face."""
    nyz = ny * nz
    for node in prange(nx * nyz):
        ix = node // nyz
        iy = (node % nyz) // nz
        iz = node % nz
        mass = grid_m[node]
        sticky = (ix < margin or ix >= nx - margin
                  or iy < margin or iy >= ny - margin
                  or iz < margin or iz >= nz - margin)
        if mass > 0.0 and not sticky:
            grid_v[node, 0] = grid_mom[node, 0] / mass
            grid_v[node, 1] = grid_mom[node, 1] / mass
            grid_v[node, 2] = grid_mom[node, 2] / mass
        else:
            grid_v[node, 0] = 0.0
            grid_v[node, 1] = 0.0
            grid_v[node, 2] = 0.0


@njit(cache=True, parallel=True)
def g2p(x, v, C, F, body, pinned, base, wts, grid_v,
        grid_width, dt, ny, nz, update_F):
    """Eq. 6-8: sample grid velocity and its first moment back to the
    particles, then left-multiply F by (I + dt C) on elastomer particles.
    Pinned particles get their z velocity clamped to zero."""
    four_inv_w2 = 4.0 / (grid_width * grid_width)
    for p in prange(x.shape[0]):
        bx = base[p, 0]
        by = base[p, 1]
        bz = base[p, 2]
        v0 = 0.0
        v1 = 0.0
        v2 = 0.0
        b00 = 0.0
        b01 = 0.0
        b02 = 0.0
        b10 = 0.0
        b11 = 0.0
        b12 = 0.0
        b20 = 0.0
        b21 = 0.0
        b22 = 0.0
        for i in range(3):
            dx0 = (bx + i) * grid_width - x[p, 0]
            wi = wts[p, 0, i]
            for j in range(3):
                dx1 = (by + j) * grid_width - x[p, 1]
                wij = wi * wts[p, 1, j]
                row = ((bx + i) * ny + by + j) * nz + bz
                for k in range(3):
                    w = wij * wts[p, 2, k]
                    node = row + k
                    dx2 = (bz + k) * grid_width - x[p, 2]
                    gv0 = grid_v[node, 0]
                    gv1 = grid_v[node, 1]
                    gv2 = grid_v[node, 2]
                    v0 += w * gv0
                    v1 += w * gv1
                    v2 += w * gv2
                    b00 += w * gv0 * dx0
                    b01 += w * gv0 * dx1
                    b02 += w * gv0 * dx2
                    b10 += w * gv1 * dx0
                    b11 += w * gv1 * dx1
                    b12 += w * gv1 * dx2
                    b20 += w * gv2 * dx0
                    b21 += w * gv2 * dx1
                    b22 += w * gv2 * dx2
        v[p, 0] = v0
        v[p, 1] = v1
        v[p, 2] = v2
        C[p, 0, 0] = four_inv_w2 * b00
        C[p, 0, 1] = four_inv_w2 * b01
        C[p, 0, 2] = four_inv_w2 * b02
        C[p, 1, 0] = four_inv_w2 * b10
        C[p, 1, 1] = four_inv_w2 * b11
        C[p, 1, 2] = four_inv_w2 * b12
        C[p, 2, 0] = four_inv_w2 * b20
        C[p, 2, 1] = four_inv_w2 * b21
        C[p, 2, 2] = four_inv_w2 * b22
        if update_F and body[p] == 0:
            g00 = 1.0 + dt * C[p, 0, 0]
            g01 = dt * C[p, 0, 1]
            g02 = dt * C[p, 0, 2]
            g10 = dt * C[p, 1, 0]
            g11 = 1.0 + dt * C[p, 1, 1]
            g12 = dt * C[p, 1, 2]
            g20 = dt * C[p, 2, 0]
            g21 = dt * C[p, 2, 1]
            g22 = 1.0 + dt * C[p, 2, 2]
            f00, f01, f02 = F[p, 0, 0], F[p, 0, 1], F[p, 0, 2]
            f10, f11, f12 = F[p, 1, 0], F[p, 1, 1], F[p, 1, 2]
            f20, f21, f22 = F[p, 2, 0], F[p, 2, 1], F[p, 2, 2]
            F[p, 0, 0] = g00 * f00 + g01 * f10 + g02 * f20
            F[p, 0, 1] = g00 * f01 + g01 * f11 + g02 * f21
            F[p, 0, 2] = g00 * f02 + g01 * f12 + g02 * f22
            F[p, 1, 0] = g10 * f00 + g11 * f10 + g12 * f20
            F[p, 1, 1] = g10 * f01 + g11 * f11 + g12 * f21
            F[p, 1, 2] = g10 * f02 + g11 * f12 + g12 * f22
            F[p, 2, 0] = g20 * f00 + g21 * f10 + g22 * f20
            F[p, 2, 1] = g20 * f01 + g21 * f11 + g22 * f21
            F[p, 2, 2] = g20 * f02 + g21 * f12 + g22 * f22
        if pinned[p]:
            v[p, 2] = 0.0


@njit(cache=True, parallel=True)
def advect(x, v, dt, grid_width, lx, ly, lz, fault):
    """Eq. 9 position update with CFL and domain escape checks."""
    for p in prange(x.shape[0]):
        d0 = v[p, 0] * dt
        d1 = v[p, 1] * dt
        d2 = v[p, 2] * dt
        if not (np.isfinite(d0) and np.isfinite(d1) and np.isfinite(d2)):
            fault[0] = FAULT_NONFINITE
            fault[1] = p
            continue
        if (abs(d0) > grid_width or abs(d1) > grid_width
                or abs(d2) > grid_width):
            fault[0] = FAULT_CFL
            fault[1] = p
            continue
        n0 = x[p, 0] + d0
        n1 = x[p, 1] + d1
        n2 = x[p, 2] + d2
        if (n0 < 0.0 or n0 > lx or n1 < 0.0 or n1 > ly
                or n2 < 0.0 or n2 > lz):
            fault[0] = FAULT_ESCAPED
            fault[1] = p
            continue
        x[p, 0] = n0
        x[p, 1] = n1
        x[p, 2] = n2
