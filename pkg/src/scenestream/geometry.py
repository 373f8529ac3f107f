"""Rigid transforms, camera geometry, and oriented-box overlap.

COORDINATE SYSTEM CONVENTIONS
-----------------------------
Camera frame: x right, y down, z forward (pinhole looking along +z).
A pixel (u, v) with depth d unprojects to
    ((u - cx) * d / fx, (v - cy) * d / fy, d).
Rays pass through integer pixel coordinates.

Unified (world) frame: z up. For a level camera the frame is anchored so
that x is the camera's forward direction projected onto the ground plane
and y completes the right-handed system (y = z cross x). The level
camera-to-unified rotation is therefore the fixed matrix

    R0 = [[0, 0, 1], [-1, 0, 0], [0, -1, 0]]

(camera +z -> unified +x, camera +y -> unified -z, camera +x -> unified -y).

Euler angles (applied right to left on camera coordinates):
    R(yaw, pitch, roll) = Rz(yaw) @ R0 @ Rx(pitch) @ Rz(roll)
Positive pitch tilts the view up, positive roll lowers the camera's right
side, yaw rotates about the world vertical. Angles are radians; yaw of an
oriented box is normalized to (-pi, pi].

Oriented boxes are 7-DoF: center (cx, cy, cz), full extents
(dx, dy, dz), and a yaw about +z. Footprints are CCW quadrilaterals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import GeometryError

Vec3 = np.ndarray  # shape (3,), float64

_R0 = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])


def normalize_angle(angle: float) -> float:
    """Wrap an angle in radians into (-pi, pi]."""
    a = math.remainder(float(angle), math.tau)
    if a <= -math.pi:
        a += math.tau
    return a


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Proper rigid motion p -> rotation @ p + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        tr = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (np.isfinite(rot).all() and np.isfinite(tr).all()):
            raise GeometryError("transform has non-finite entries")
        if np.abs(rot @ rot.T - np.eye(3)).max() > 1e-8:
            raise GeometryError("rotation is not orthonormal")
        if np.linalg.det(rot) < 0.0:
            raise GeometryError("rotation is a reflection (det < 0)")
        rot.flags.writeable = False
        tr.flags.writeable = False
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tr)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one (3,) point or an (N, 3) batch."""
        pts = np.asarray(points, dtype=np.float64)
        if pts.shape[-1] != 3:
            raise GeometryError(f"points must have 3 components, got shape {pts.shape}")
        return pts @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Transform equal to applying ``other`` first, then self."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rot_t = self.rotation.T
        return RigidTransform(rot_t, -(rot_t @ self.translation))


def apply_transform(transform: RigidTransform, points: np.ndarray) -> np.ndarray:
    return transform.apply(points)


def ground_align_transform(pitch: float, roll: float) -> RigidTransform:
    """Camera-to-unified transform for a camera with known pitch and roll.

    The unified frame is anchored at the camera: zero translation, x along
    the camera's ground-projected forward direction, z up. Requires
    |pitch| < pi/2 and |roll| < pi/2; at pitch = +-pi/2 the forward
    direction has no ground projection and the frame is undefined.
    """
    if not (math.isfinite(pitch) and math.isfinite(roll)):
        raise GeometryError("pitch/roll must be finite")
    if abs(pitch) >= math.pi / 2:
        raise GeometryError(
            f"degenerate orientation: |pitch| = {abs(pitch):.6f} >= pi/2"
        )
    if abs(roll) >= math.pi / 2:
        raise GeometryError(f"degenerate orientation: |roll| = {abs(roll):.6f} >= pi/2")
    return RigidTransform(_R0 @ rot_x(pitch) @ rot_z(roll), np.zeros(3))


def camera_pose(position, yaw: float = 0.0, pitch: float = 0.0,
                roll: float = 0.0) -> RigidTransform:
    """Camera-to-world pose from position and yaw/pitch/roll (see module doc)."""
    rot = rot_z(yaw) @ _R0 @ rot_x(pitch) @ rot_z(roll)
    return RigidTransform(rot, np.asarray(position, dtype=np.float64).reshape(3))


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics; fx/fy in pixels, principal point (cx, cy)."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise GeometryError(f"intrinsic {name} must be finite")
            object.__setattr__(self, name, v)
        if self.fx <= 0 or self.fy <= 0:
            raise GeometryError("focal lengths must be positive")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        if self.width < 1 or self.height < 1:
            raise GeometryError("image size must be positive")
        if not (0 <= self.cx < self.width) or not (0 <= self.cy < self.height):
            raise GeometryError(
                f"principal point ({self.cx}, {self.cy}) outside the "
                f"{self.width}x{self.height} image")


def unproject_depth(depth: np.ndarray, intrinsics: CameraIntrinsics
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Lift a depth map to camera-frame points.

    Returns (points (N, 3) float64, pixel_indices (N,) int64) where
    pixel_indices are row-major flat indices of the valid pixels (depth
    finite and > 0), so callers can pair points with per-pixel labels.
    """
    d = np.asarray(depth)
    if d.shape != (intrinsics.height, intrinsics.width):
        raise GeometryError(
            f"depth shape {d.shape} does not match intrinsics "
            f"({intrinsics.height}, {intrinsics.width})"
        )
    d = d.astype(np.float64, copy=False)
    flat = d.ravel()
    valid = np.isfinite(flat) & (flat > 0)
    idx = np.nonzero(valid)[0]
    dv = flat[idx]
    u = (idx % intrinsics.width).astype(np.float64)
    v = (idx // intrinsics.width).astype(np.float64)
    pts = np.empty((idx.shape[0], 3))
    pts[:, 0] = (u - intrinsics.cx) * dv / intrinsics.fx
    pts[:, 1] = (v - intrinsics.cy) * dv / intrinsics.fy
    pts[:, 2] = dv
    return pts, idx


@dataclass(frozen=True)
class OrientedBox3:
    """7-DoF oriented box: center, full extents, yaw about +z.

    Extents must be positive and finite; yaw is normalized to (-pi, pi] on
    construction. Instances are immutable and hashable.
    """

    label: str
    center: tuple[float, float, float]
    dims: tuple[float, float, float]
    yaw: float

    def __post_init__(self):
        center = tuple(float(v) for v in np.asarray(self.center).reshape(3))
        dims = tuple(float(v) for v in np.asarray(self.dims).reshape(3))
        if not all(math.isfinite(v) for v in center):
            raise GeometryError("box center must be finite")
        if not all(math.isfinite(v) and v > 0 for v in dims):
            raise GeometryError(f"box extents must be positive and finite, got {dims}")
        if not math.isfinite(self.yaw):
            raise GeometryError("box yaw must be finite")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))

    @property
    def volume(self) -> float:
        return self.dims[0] * self.dims[1] * self.dims[2]

    def footprint(self) -> np.ndarray:
        """CCW (4, 2) xy corners of the box footprint."""
        hx, hy = 0.5 * self.dims[0], 0.5 * self.dims[1]
        local = np.array([[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]])
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array(self.center[:2])

    def corners(self) -> np.ndarray:
        """(8, 3) corners: bottom face CCW, then top face in the same order."""
        fp = self.footprint()
        z0 = self.center[2] - 0.5 * self.dims[2]
        z1 = self.center[2] + 0.5 * self.dims[2]
        out = np.empty((8, 3))
        out[:4, :2] = fp
        out[:4, 2] = z0
        out[4:, :2] = fp
        out[4:, 2] = z1
        return out

    def params(self) -> np.ndarray:
        """(7,) array (cx, cy, cz, dx, dy, dz, yaw), the kernel wire layout."""
        return np.array([*self.center, *self.dims, self.yaw])


def box_corners(box: OrientedBox3) -> np.ndarray:
    return box.corners()


@dataclass(frozen=True, eq=False)
class ConvexPolygon2:
    """Convex CCW polygon in the plane; rejects non-convex input."""

    vertices: np.ndarray

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=np.float64)
        if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 3:
            raise GeometryError("polygon needs an (n >= 3, 2) vertex array")
        if not np.isfinite(verts).all():
            raise GeometryError("polygon vertices must be finite")
        nxt = np.roll(verts, -1, axis=0)
        if (np.abs(nxt - verts).max(axis=1) == 0.0).any():
            raise GeometryError("polygon has duplicate consecutive vertices")
        e = nxt - verts
        e_next = np.roll(e, -1, axis=0)
        cross = e[:, 0] * e_next[:, 1] - e[:, 1] * e_next[:, 0]
        if (cross < -1e-12).any():
            raise GeometryError("polygon is not convex and CCW")
        verts.flags.writeable = False
        object.__setattr__(self, "vertices", verts)

    @property
    def area(self) -> float:
        return _shoelace(self.vertices)


def _shoelace(verts) -> float:
    """Signed area of a polygon given as an (n, 2) array or vertex list."""
    v = np.asarray(verts, dtype=np.float64)
    if v.shape[0] < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _clip_convex(subject: np.ndarray, clip: np.ndarray) -> list[tuple[float, float]]:
    """Sutherland-Hodgman: clip CCW ``subject`` against CCW convex ``clip``."""
    output = [tuple(p) for p in subject]
    nc = len(clip)
    for i in range(nc):
        if not output:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % nc]
        ex, ey = bx - ax, by - ay
        polygon = output
        output = []
        n = len(polygon)
        for j in range(n):
            sx, sy = polygon[j - 1]
            px, py = polygon[j]
            s_side = ex * (sy - ay) - ey * (sx - ax)
            p_side = ex * (py - ay) - ey * (px - ax)
            if p_side >= 0.0:
                if s_side < 0.0:
                    output.append(_edge_intersect(sx, sy, px, py, s_side, p_side))
                output.append((px, py))
            elif s_side >= 0.0:
                output.append(_edge_intersect(sx, sy, px, py, s_side, p_side))
    return output


def _edge_intersect(sx, sy, px, py, s_side, p_side):
    """Point where segment s->p crosses the clip line, given the two side values."""
    # callers guarantee s and p straddle the line, so the sides differ
    t = s_side / (s_side - p_side)
    return (sx + t * (px - sx), sy + t * (py - sy))


def polygon_intersection_area(a, b) -> float:
    """Area of the intersection of two convex CCW polygons.

    Accepts ConvexPolygon2 instances or raw (n, 2) vertex arrays; raw input
    is validated (non-convex input raises GeometryError).
    """
    pa = a if isinstance(a, ConvexPolygon2) else ConvexPolygon2(a)
    pb = b if isinstance(b, ConvexPolygon2) else ConvexPolygon2(b)
    clipped = _clip_convex(pa.vertices, pb.vertices)
    if len(clipped) < 3:
        return 0.0
    return max(0.0, _shoelace(np.asarray(clipped)))


def iou3d(a: OrientedBox3, b: OrientedBox3) -> float:
    """Exact IoU of two z-aligned oriented boxes.

    Footprint overlap by polygon clipping, times the z overlap; labels are
    ignored (class handling lives in the matching layer). Symmetric to the
    bit (arguments are put in a canonical order before clipping) and
    exactly 1.0 for geometrically identical boxes.
    """
    pa, pb = a.params(), b.params()
    if np.array_equal(pa, pb):
        return 1.0
    if pb.tobytes() < pa.tobytes():
        a, b = b, a
    z_lo = max(a.center[2] - 0.5 * a.dims[2], b.center[2] - 0.5 * b.dims[2])
    z_hi = min(a.center[2] + 0.5 * a.dims[2], b.center[2] + 0.5 * b.dims[2])
    if z_hi <= z_lo:
        return 0.0
    clipped = _clip_convex(a.footprint(), b.footprint())
    if len(clipped) < 3:
        return 0.0
    inter = max(0.0, _shoelace(np.asarray(clipped))) * (z_hi - z_lo)
    union = a.volume + b.volume - inter
    if union <= 0.0:
        return 0.0
    return min(1.0, max(0.0, inter / union))


def monte_carlo_iou3d(a: OrientedBox3, b: OrientedBox3,
                      n_samples: int = 1_000_000, seed: int = 0) -> float:
    """Sampling-based IoU estimate, independent of the clipping path.

    Backed by the active kernel backend; deterministic in (inputs, seed).
    """
    inter = kernels.box_pair_intersection_volume(a.params(), b.params(),
                                                 n_samples, seed)
    union = a.volume + b.volume - inter
    return min(1.0, max(0.0, inter / union))


def convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Convex hull of a 2-d point set (monotone chain), CCW, no repeats.

    Collinear points along hull edges are dropped.  Raises GeometryError
    when the hull is degenerate (fewer than 3 distinct non-collinear
    points).
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if not np.isfinite(pts).all():
        raise GeometryError("hull input must be finite")
    uniq = np.unique(pts, axis=0)  # sorts lexicographically (x, then y)
    if uniq.shape[0] < 3:
        raise GeometryError(
            f"need at least 3 distinct points, got {uniq.shape[0]}")

    def _cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[np.ndarray] = []
    for p in uniq:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0.0:
            lower.pop()
        lower.append(p)
    upper: list[np.ndarray] = []
    for p in uniq[::-1]:
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0.0:
            upper.pop()
        upper.append(p)
    hull = np.asarray(lower[:-1] + upper[:-1])
    if hull.shape[0] < 3:
        raise GeometryError("points are collinear")
    return hull


def min_area_rect(points: np.ndarray
                  ) -> tuple[tuple[float, float], tuple[float, float], float]:
    """Minimum-area enclosing rectangle of a 2-d point set.

    Returns (center, dims, yaw) with dims ordered so dims[0] >= dims[1]
    and yaw normalized to (-pi/2, pi/2].  The optimum has one side flush
    with a convex-hull edge, so scanning hull-edge directions is exact.
    Raises GeometryError on degenerate (collinear or tiny) input.
    """
    hull = convex_hull_2d(points)
    x, y = hull[:, 0], hull[:, 1]
    edges = np.roll(hull, -1, axis=0) - hull
    angles = np.arctan2(edges[:, 1], edges[:, 0])
    best = None
    for theta in angles:
        c, s = math.cos(theta), math.sin(theta)
        u = x * c + y * s
        v = -x * s + y * c
        u0, u1 = u.min(), u.max()
        v0, v1 = v.min(), v.max()
        area = (u1 - u0) * (v1 - v0)
        if best is None or area < best[0]:
            best = (area, theta, u0, u1, v0, v1)
    _, theta, u0, u1, v0, v1 = best
    c, s = math.cos(theta), math.sin(theta)
    cu, cv = 0.5 * (u0 + u1), 0.5 * (v0 + v1)
    center = (cu * c - cv * s, cu * s + cv * c)
    dx, dy = u1 - u0, v1 - v0
    yaw = theta
    if dx < dy:
        dx, dy = dy, dx
        yaw += 0.5 * math.pi
    yaw = math.remainder(yaw, math.pi)
    if yaw <= -0.5 * math.pi:
        yaw += math.pi
    return center, (dx, dy), yaw


def segments_intersect_box(starts: np.ndarray, ends: np.ndarray,
                           box: OrientedBox3, margin: float = 1e-6
                           ) -> np.ndarray:
    """Whether each segment passes through a box's interior (boolean (N,)).

    Endpoints on the surface do not count as hits: the overlap of the
    slab-test interval with (margin, 1 - margin) must be non-empty.
    """
    starts = np.asarray(starts, dtype=np.float64).reshape(-1, 3)
    ends = np.asarray(ends, dtype=np.float64).reshape(-1, 3)
    if starts.shape != ends.shape:
        raise GeometryError("starts and ends must have matching shapes")
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    rel_s = starts - np.array(box.center)
    rel_e = ends - np.array(box.center)
    axes = np.empty((starts.shape[0], 3, 2))
    axes[:, 0, 0] = c * rel_s[:, 0] + s * rel_s[:, 1]
    axes[:, 1, 0] = c * rel_s[:, 1] - s * rel_s[:, 0]
    axes[:, 2, 0] = rel_s[:, 2]
    axes[:, 0, 1] = c * rel_e[:, 0] + s * rel_e[:, 1]
    axes[:, 1, 1] = c * rel_e[:, 1] - s * rel_e[:, 0]
    axes[:, 2, 1] = rel_e[:, 2]
    half = 0.5 * np.asarray(box.dims)
    t0 = np.full(starts.shape[0], margin)
    t1 = np.full(starts.shape[0], 1.0 - margin)
    ok = np.ones(starts.shape[0], dtype=bool)
    for k in range(3):
        o = axes[:, k, 0]
        d = axes[:, k, 1] - o
        par = np.abs(d) < 1e-12
        ok &= ~(par & (np.abs(o) > half[k]))
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (-half[k] - o) / d
            tb = (half[k] - o) / d
        lo = np.fmin(ta, tb)
        hi = np.fmax(ta, tb)
        t0 = np.where(par, t0, np.fmax(t0, lo))
        t1 = np.where(par, t1, np.fmin(t1, hi))
    return ok & (t1 > t0)
