# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels.

Twin of ``scenestream.kernels._ref``: same expression order, same
splitmix64 counter stream, same branch structure, so outputs are
bit-identical between the two backends. Keep both in lockstep when
editing either.
"""

from libc.math cimport cos, sin, fabs, fmin, fmax, sqrt, INFINITY
from libc.stdint cimport uint64_t, int64_t

import numpy as np

BACKEND_NAME = "compiled"

cdef double _EPS_T = 1e-9
cdef double _EPS_PAR = 1e-12
cdef uint64_t _GAMMA = 0x9E3779B97F4A7C15


cdef inline uint64_t _sm_finalize(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


def box_pair_intersection_volume(box_a, box_b, n_samples, seed):
    """Monte Carlo estimate of the overlap volume of two z-aligned oriented boxes.

    Same contract as the pure backend: boxes are (cx, cy, cz, dx, dy, dz, yaw)
    with full extents; stratified jittered sampling with isqrt(n_samples)**2
    samples, deterministic in (inputs, seed).
    """
    a_arr = np.ascontiguousarray(box_a, dtype=np.float64).reshape(-1)
    b_arr = np.ascontiguousarray(box_b, dtype=np.float64).reshape(-1)
    if a_arr.shape[0] != 7 or b_arr.shape[0] != 7:
        raise ValueError("boxes must have 7 parameters (cx, cy, cz, dx, dy, dz, yaw)")
    cdef int64_t want = int(n_samples)
    if want < 1:
        raise ValueError("n_samples must be >= 1")
    cdef const double[::1] a = a_arr
    cdef const double[::1] b = b_arr

    cdef double acx = a[0], acy = a[1], acz = a[2]
    cdef double hax = 0.5 * a[3], hay = 0.5 * a[4], haz = 0.5 * a[5]
    cdef double ca = cos(a[6]), sa = sin(a[6])
    cdef double bcx = b[0], bcy = b[1], bcz = b[2]
    cdef double hbx = 0.5 * b[3], hby = 0.5 * b[4], hbz = 0.5 * b[5]
    cdef double cb = cos(b[6]), sb = sin(b[6])

    cdef double exa = 0.5 * (fabs(ca) * a[3] + fabs(sa) * a[4])
    cdef double eya = 0.5 * (fabs(sa) * a[3] + fabs(ca) * a[4])
    cdef double exb = 0.5 * (fabs(cb) * b[3] + fabs(sb) * b[4])
    cdef double eyb = 0.5 * (fabs(sb) * b[3] + fabs(cb) * b[4])

    cdef double x0 = fmax(acx - exa, bcx - exb)
    cdef double x1 = fmin(acx + exa, bcx + exb)
    cdef double y0 = fmax(acy - eya, bcy - eyb)
    cdef double y1 = fmin(acy + eya, bcy + eyb)
    cdef double z0 = fmax(acz - haz, bcz - hbz)
    cdef double z1 = fmin(acz + haz, bcz + hbz)
    if not (x1 > x0 and y1 > y0 and z1 > z0):
        return 0.0

    cdef int64_t g = <int64_t>sqrt(<double>want)
    while (g + 1) * (g + 1) <= want:
        g += 1
    while g * g > want:
        g -= 1
    cdef int64_t n = g * g
    cdef double cw = (x1 - x0) / g
    cdef double ch = (y1 - y0) / g
    cdef double zs = z1 - z0

    cdef uint64_t base = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef int64_t i, count = 0
    cdef uint64_t r1, r2
    cdef double jx, jy, z01, x, y, z
    cdef double dxa, dya, ua, va, dxb, dyb, ub, vb
    cdef bint in_a, in_b

    with nogil:
        for i in range(n):
            r1 = _sm_finalize(base + (<uint64_t>(2 * i + 1)) * _GAMMA)
            r2 = _sm_finalize(base + (<uint64_t>(2 * i + 2)) * _GAMMA)
            jx = <double>(r1 >> 40) * (1.0 / 16777216.0)
            jy = <double>((r1 >> 16) & <uint64_t>0xFFFFFF) * (1.0 / 16777216.0)
            z01 = <double>(r2 >> 11) * (1.0 / 9007199254740992.0)
            x = x0 + (<double>(i % g) + jx) * cw
            y = y0 + (<double>(i // g) + jy) * ch
            z = z0 + z01 * zs

            dxa = x - acx
            dya = y - acy
            ua = ca * dxa + sa * dya
            va = ca * dya - sa * dxa
            in_a = (fabs(ua) <= hax) & (fabs(va) <= hay) & (fabs(z - acz) <= haz)

            dxb = x - bcx
            dyb = y - bcy
            ub = cb * dxb + sb * dyb
            vb = cb * dyb - sb * dxb
            in_b = (fabs(ub) <= hbx) & (fabs(vb) <= hby) & (fabs(z - bcz) <= hbz)

            count += in_a & in_b

    return (x1 - x0) * (y1 - y0) * (z1 - z0) * (<double>count / <double>n)


def render_boxes(boxes, sem_values, floor_bounds, rotation, position,
                 fx, fy, cx, cy, width, height):
    """Ray-cast depth and semantic-id maps; same contract as the pure backend."""
    boxes_arr = np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 7)
    cdef int m = boxes_arr.shape[0]
    sem_arr = np.ascontiguousarray(sem_values, dtype=np.uint16).reshape(-1)
    if sem_arr.shape[0] != m:
        raise ValueError("sem_values length must match box count")
    rot_arr = np.ascontiguousarray(rotation, dtype=np.float64).reshape(3, 3)
    pos_arr = np.ascontiguousarray(position, dtype=np.float64).reshape(-1)
    if pos_arr.shape[0] != 3:
        raise ValueError("position must have 3 components")
    cdef int w = int(width)
    cdef int h = int(height)
    if w < 1 or h < 1:
        raise ValueError("image size must be positive")

    cdef double fxd = float(fx), fyd = float(fy)
    cdef double cxd = float(cx), cyd = float(cy)
    cdef const double[:, ::1] rot = rot_arr
    cdef double r00 = rot[0, 0], r01 = rot[0, 1], r02 = rot[0, 2]
    cdef double r10 = rot[1, 0], r11 = rot[1, 1], r12 = rot[1, 2]
    cdef double r20 = rot[2, 0], r21 = rot[2, 1], r22 = rot[2, 2]
    cdef double ox = pos_arr[0], oy = pos_arr[1], oz = pos_arr[2]

    cdef bint has_floor = floor_bounds is not None
    cdef double fl_x0 = 0.0, fl_x1 = 0.0, fl_y0 = 0.0, fl_y1 = 0.0
    if has_floor:
        fb = np.asarray(floor_bounds, dtype=np.float64).reshape(-1)
        if fb.shape[0] != 4:
            raise ValueError("floor_bounds must be (x0, x1, y0, y1)")
        fl_x0, fl_x1, fl_y0, fl_y1 = fb[0], fb[1], fb[2], fb[3]

    # per-box precompute: hx hy hz cb sb ou ov ow
    pre_arr = np.empty((m, 8), dtype=np.float64)
    cdef const double[:, ::1] bx = boxes_arr
    cdef double[:, ::1] pre = pre_arr
    cdef const unsigned short[::1] sv = sem_arr
    cdef int j
    cdef double bcx, bcy, bcz, yaw, cbj, sbj
    for j in range(m):
        bcx = bx[j, 0]; bcy = bx[j, 1]; bcz = bx[j, 2]
        yaw = bx[j, 6]
        cbj = cos(yaw); sbj = sin(yaw)
        pre[j, 0] = 0.5 * bx[j, 3]
        pre[j, 1] = 0.5 * bx[j, 4]
        pre[j, 2] = 0.5 * bx[j, 5]
        pre[j, 3] = cbj
        pre[j, 4] = sbj
        pre[j, 5] = cbj * (ox - bcx) + sbj * (oy - bcy)
        pre[j, 6] = cbj * (oy - bcy) - sbj * (ox - bcx)
        pre[j, 7] = oz - bcz

    depth_arr = np.zeros((h, w), dtype=np.float32)
    sem_out_arr = np.zeros((h, w), dtype=np.uint16)
    cdef float[:, ::1] dep = depth_arr
    cdef unsigned short[:, ::1] sem_out = sem_out_arr

    cdef int u, v
    cdef double dcxu, dcyv, dxw, dyw, dzw
    cdef double best_t, tf, px, py
    cdef unsigned short best_s
    cdef double hxj, hyj, hzj, ou, ov, ow, du, dv, dw
    cdef double t0, t1, inv, ta, tb, th
    cdef bint alive

    with nogil:
        for v in range(h):
            dcyv = (v - cyd) / fyd
            for u in range(w):
                dcxu = (u - cxd) / fxd
                dxw = r00 * dcxu + r01 * dcyv + r02
                dyw = r10 * dcxu + r11 * dcyv + r12
                dzw = r20 * dcxu + r21 * dcyv + r22

                best_t = INFINITY
                best_s = 0

                if has_floor and fabs(dzw) > _EPS_PAR:
                    tf = -oz / dzw
                    if tf > _EPS_T and tf < best_t:
                        px = ox + tf * dxw
                        py = oy + tf * dyw
                        if fl_x0 <= px <= fl_x1 and fl_y0 <= py <= fl_y1:
                            best_t = tf
                            best_s = 0

                for j in range(m):
                    hxj = pre[j, 0]; hyj = pre[j, 1]; hzj = pre[j, 2]
                    cbj = pre[j, 3]; sbj = pre[j, 4]
                    ou = pre[j, 5]; ov = pre[j, 6]; ow = pre[j, 7]
                    du = cbj * dxw + sbj * dyw
                    dv = cbj * dyw - sbj * dxw
                    dw = dzw

                    t0 = -INFINITY
                    t1 = INFINITY
                    alive = 1
                    if fabs(du) < _EPS_PAR:
                        if fabs(ou) > hxj:
                            alive = 0
                    else:
                        inv = 1.0 / du
                        ta = (-hxj - ou) * inv
                        tb = (hxj - ou) * inv
                        t0 = fmax(t0, fmin(ta, tb))
                        t1 = fmin(t1, fmax(ta, tb))
                    if alive:
                        if fabs(dv) < _EPS_PAR:
                            if fabs(ov) > hyj:
                                alive = 0
                        else:
                            inv = 1.0 / dv
                            ta = (-hyj - ov) * inv
                            tb = (hyj - ov) * inv
                            t0 = fmax(t0, fmin(ta, tb))
                            t1 = fmin(t1, fmax(ta, tb))
                    if alive:
                        if fabs(dw) < _EPS_PAR:
                            if fabs(ow) > hzj:
                                alive = 0
                        else:
                            inv = 1.0 / dw
                            ta = (-hzj - ow) * inv
                            tb = (hzj - ow) * inv
                            t0 = fmax(t0, fmin(ta, tb))
                            t1 = fmin(t1, fmax(ta, tb))
                    if alive and t1 >= t0 and t1 > _EPS_T:
                        th = t0 if t0 > _EPS_T else t1
                        if th < best_t:
                            best_t = th
                            best_s = sv[j]

                if best_t < INFINITY:
                    dep[v, u] = <float>best_t
                    sem_out[v, u] = best_s

    return depth_arr, sem_out_arr
