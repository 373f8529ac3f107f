"""Pure-numpy reference implementations of the hot kernels.

This module mirrors the compiled extension (``_fast``) op for op: same
expression order, same splitmix64 counter stream, same branch structure.
Both backends therefore return bit-identical outputs; the extension exists
only for speed. Keep the two in lockstep when editing either.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND_NAME = "python"

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK24 = np.uint64(0xFFFFFF)

_EPS_T = 1e-9       # minimum ray parameter counted as a hit
_EPS_PAR = 1e-12    # |direction component| below this is treated as parallel

_INV24 = 1.0 / 16777216.0            # 2**-24
_INV53 = 1.0 / 9007199254740992.0    # 2**-53


def _sm_finalize(z):
    """splitmix64 output stage; z is a uint64 scalar or array."""
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def box_pair_intersection_volume(box_a, box_b, n_samples, seed):
    """Monte Carlo estimate of the overlap volume of two z-aligned oriented boxes.

    Boxes are length-7 float sequences (cx, cy, cz, dx, dy, dz, yaw). dx/dy/dz
    are full extents; yaw rotates about +z. Samples are a stratified jittered
    grid over the intersection of the two footprint AABBs, with z drawn
    uniformly over the z overlap; the sample count actually used is
    isqrt(n_samples)**2. Deterministic in (inputs, seed).
    """
    a = np.asarray(box_a, dtype=np.float64).reshape(-1)
    b = np.asarray(box_b, dtype=np.float64).reshape(-1)
    if a.shape[0] != 7 or b.shape[0] != 7:
        raise ValueError("boxes must have 7 parameters (cx, cy, cz, dx, dy, dz, yaw)")
    n_samples = int(n_samples)
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")

    acx, acy, acz = a[0], a[1], a[2]
    hax, hay, haz = 0.5 * a[3], 0.5 * a[4], 0.5 * a[5]
    ca, sa = math.cos(a[6]), math.sin(a[6])
    bcx, bcy, bcz = b[0], b[1], b[2]
    hbx, hby, hbz = 0.5 * b[3], 0.5 * b[4], 0.5 * b[5]
    cb, sb = math.cos(b[6]), math.sin(b[6])

    # footprint AABB half-extents of a yaw-rotated rectangle
    exa = 0.5 * (abs(ca) * a[3] + abs(sa) * a[4])
    eya = 0.5 * (abs(sa) * a[3] + abs(ca) * a[4])
    exb = 0.5 * (abs(cb) * b[3] + abs(sb) * b[4])
    eyb = 0.5 * (abs(sb) * b[3] + abs(cb) * b[4])

    x0 = max(acx - exa, bcx - exb)
    x1 = min(acx + exa, bcx + exb)
    y0 = max(acy - eya, bcy - eyb)
    y1 = min(acy + eya, bcy + eyb)
    z0 = max(acz - haz, bcz - hbz)
    z1 = min(acz + haz, bcz + hbz)
    if not (x1 > x0 and y1 > y0 and z1 > z0):
        return 0.0

    g = math.isqrt(n_samples)
    n = g * g
    cw = (x1 - x0) / g
    ch = (y1 - y0) / g
    zs = z1 - z0

    base = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
    idx = np.arange(n, dtype=np.uint64)
    k1 = base + (np.uint64(2) * idx + np.uint64(1)) * _GAMMA
    k2 = base + (np.uint64(2) * idx + np.uint64(2)) * _GAMMA
    r1 = _sm_finalize(k1)
    r2 = _sm_finalize(k2)

    jx = (r1 >> np.uint64(40)).astype(np.float64) * _INV24
    jy = ((r1 >> np.uint64(16)) & _MASK24).astype(np.float64) * _INV24
    z01 = (r2 >> np.uint64(11)).astype(np.float64) * _INV53

    cells = np.arange(n, dtype=np.int64)
    gx = (cells % g).astype(np.float64)
    gy = (cells // g).astype(np.float64)

    x = x0 + (gx + jx) * cw
    y = y0 + (gy + jy) * ch
    z = z0 + z01 * zs

    dxa = x - acx
    dya = y - acy
    ua = ca * dxa + sa * dya
    va = ca * dya - sa * dxa
    in_a = (np.abs(ua) <= hax) & (np.abs(va) <= hay) & (np.abs(z - acz) <= haz)

    dxb = x - bcx
    dyb = y - bcy
    ub = cb * dxb + sb * dyb
    vb = cb * dyb - sb * dxb
    in_b = (np.abs(ub) <= hbx) & (np.abs(vb) <= hby) & (np.abs(z - bcz) <= hbz)

    count = int(np.count_nonzero(in_a & in_b))
    return (x1 - x0) * (y1 - y0) * (z1 - z0) * (count / n)


def render_boxes(boxes, sem_values, floor_bounds, rotation, position,
                 fx, fy, cx, cy, width, height):
    """Ray-cast depth and semantic-id maps of yaw-rotated boxes plus a floor.

    boxes: (M, 7) float array, rows (cx, cy, cz, dx, dy, dz, yaw) in world
    coordinates. sem_values: (M,) semantic id written where each box is the
    nearest hit. floor_bounds: (x0, x1, y0, y1) rectangle at z = 0 rendered
    with semantic id 0, or None for no floor. rotation/position: camera-to-
    world pose; camera looks along +z with x right and y down. Rays pass
    through integer pixel coordinates so unprojected depth lands back on the
    surfaces. Returns (depth float32 (H, W), sem uint16 (H, W)); depth is 0
    where nothing was hit.
    """
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 7)
    m = boxes.shape[0]
    sem_values = np.asarray(sem_values, dtype=np.uint16).reshape(-1)
    if sem_values.shape[0] != m:
        raise ValueError("sem_values length must match box count")
    rot = np.asarray(rotation, dtype=np.float64).reshape(3, 3)
    ox, oy, oz = (float(v) for v in np.asarray(position, dtype=np.float64).reshape(3))
    width = int(width)
    height = int(height)
    if width < 1 or height < 1:
        raise ValueError("image size must be positive")

    dcx = (np.arange(width, dtype=np.float64) - cx) / fx
    dcy = (np.arange(height, dtype=np.float64) - cy) / fy
    dcx = dcx[np.newaxis, :]
    dcy = dcy[:, np.newaxis]
    dxw = rot[0, 0] * dcx + rot[0, 1] * dcy + rot[0, 2]
    dyw = rot[1, 0] * dcx + rot[1, 1] * dcy + rot[1, 2]
    dzw = rot[2, 0] * dcx + rot[2, 1] * dcy + rot[2, 2]

    best_t = np.full((height, width), np.inf)
    best_sem = np.zeros((height, width), dtype=np.uint16)

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if floor_bounds is not None:
            fx0, fx1, fy0, fy1 = (float(v) for v in floor_bounds)
            tf = -oz / dzw
            px = ox + tf * dxw
            py = oy + tf * dyw
            hit = ((np.abs(dzw) > _EPS_PAR) & (tf > _EPS_T)
                   & (px >= fx0) & (px <= fx1) & (py >= fy0) & (py <= fy1))
            better = hit & (tf < best_t)
            best_t = np.where(better, tf, best_t)
            # floor id is 0 and best_sem starts at 0: nothing to write

        for j in range(m):
            bcx, bcy, bcz, ddx, ddy, ddz, yaw = (float(v) for v in boxes[j])
            hx, hy, hz = 0.5 * ddx, 0.5 * ddy, 0.5 * ddz
            cb, sb = math.cos(yaw), math.sin(yaw)
            ou = cb * (ox - bcx) + sb * (oy - bcy)
            ov = cb * (oy - bcy) - sb * (ox - bcx)
            ow = oz - bcz
            du = cb * dxw + sb * dyw
            dv = cb * dyw - sb * dxw
            dw = dzw

            t0 = np.full((height, width), -np.inf)
            t1 = np.full((height, width), np.inf)
            alive = np.ones((height, width), dtype=bool)
            for d, o, h in ((du, ou, hx), (dv, ov, hy), (dw, ow, hz)):
                par = np.abs(d) < _EPS_PAR
                alive &= ~(par & (abs(o) > h))
                inv = 1.0 / d
                ta = (-h - o) * inv
                tb = (h - o) * inv
                lo = np.fmin(ta, tb)
                hi = np.fmax(ta, tb)
                t0 = np.where(par, t0, np.fmax(t0, lo))
                t1 = np.where(par, t1, np.fmin(t1, hi))
            hit = alive & (t1 >= t0) & (t1 > _EPS_T)
            th = np.where(t0 > _EPS_T, t0, t1)
            better = hit & (th < best_t)
            best_t = np.where(better, th, best_t)
            best_sem = np.where(better, sem_values[j], best_sem)

    depth = np.where(np.isfinite(best_t), best_t, 0.0).astype(np.float32)
    return depth, best_sem
