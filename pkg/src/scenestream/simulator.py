"""Synthetic indoor scenes, exact depth/semantic rendering, and a
geometric oracle detector for closed-loop pipeline validation.

Scenes are axis-bounded rooms with a floor at z = 0 and yaw-rotated
oriented boxes resting on it, drawn from the canonical 10-category
vocabulary. Rendering is exact ray casting (see kernels.render_boxes), so
unprojected depth lands back on scene surfaces to within float rounding —
every downstream geometric contract can be checked against ground truth.

The oracle detector inverts the renderer geometrically: per category it
single-linkage-clusters the memory points and fits each cluster with a
minimum-area rectangle plus a z extent. It stands in for a learned
detector wherever the harness needs a closed loop.
"""

from __future__ import annotations

import json
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from . import kernels
from .errors import ConfigError, GeometryError, PlacementError
from .geometry import (CameraIntrinsics, OrientedBox3, RigidTransform,
                       camera_pose, ground_align_transform, min_area_rect,
                       normalize_angle, segments_intersect_box)
from .harness import write_grid
from .scene_format import (CANONICAL_CATEGORIES, SceneDescription,
                           description_from_boxes, serialize)

# Full-extent (dx, dy, dz) ranges per category, in meters, sized so ten
# objects with a 0.5 m mutual gap pack comfortably into a 6 x 6 m room and
# every top face sits below the default 1.8 m camera height.
CATEGORY_SIZE_RANGES: dict[str, tuple[tuple[float, float, float],
                                      tuple[float, float, float]]] = {
    "chair":    ((0.45, 0.45, 0.75), (0.60, 0.60, 0.95)),
    "table":    ((0.80, 0.60, 0.70), (1.40, 0.90, 0.78)),
    "computer": ((0.40, 0.15, 0.35), (0.55, 0.25, 0.50)),
    "curtain":  ((1.00, 0.06, 1.30), (1.80, 0.12, 1.50)),
    "sink":     ((0.50, 0.40, 0.80), (0.70, 0.55, 0.90)),
    "bed":      ((1.40, 1.00, 0.50), (2.00, 1.50, 0.65)),
    "bookcase": ((0.80, 0.25, 0.90), (1.20, 0.40, 1.10)),
    "sofa":     ((1.50, 0.80, 0.70), (2.00, 1.00, 0.90)),
    "toilet":   ((0.40, 0.60, 0.75), (0.55, 0.75, 0.85)),
    "tub":      ((1.40, 0.70, 0.55), (1.70, 0.80, 0.65)),
}

FLOOR_LABEL = "floor"
DEFAULT_VOCABULARY = (FLOOR_LABEL,) + CANONICAL_CATEGORIES


@dataclass(frozen=True)
class SyntheticScene:
    """A room with a floor at z = 0 and boxes resting inside it."""

    room_dims: tuple[float, float, float]
    objects: tuple[OrientedBox3, ...]
    seed: int = 0

    def __post_init__(self):
        dims = tuple(float(v) for v in self.room_dims)
        if len(dims) != 3 or not all(math.isfinite(v) and v > 0 for v in dims):
            raise ConfigError(f"room_dims must be 3 positive numbers, "
                              f"got {self.room_dims!r}")
        object.__setattr__(self, "room_dims", dims)
        object.__setattr__(self, "objects", tuple(self.objects))
        for box in self.objects:
            fp = box.footprint()
            if (fp[:, 0].min() < -1e-9 or fp[:, 0].max() > dims[0] + 1e-9
                    or fp[:, 1].min() < -1e-9 or fp[:, 1].max() > dims[1] + 1e-9):
                raise ConfigError(f"object footprint leaves the room: {box}")
            z0 = box.center[2] - 0.5 * box.dims[2]
            z1 = box.center[2] + 0.5 * box.dims[2]
            if z0 < -1e-9 or z1 > dims[2] + 1e-9:
                raise ConfigError(f"object leaves the room vertically: {box}")

    @property
    def vocabulary(self) -> tuple[str, ...]:
        return DEFAULT_VOCABULARY

    def semantic_id(self, label: str) -> int:
        return self.vocabulary.index(label)


def _footprint_gap(a: np.ndarray, b: np.ndarray) -> float:
    """Distance between two convex CCW footprints; 0 when they overlap."""
    def separated(p, q):
        for i in range(len(p)):
            ex, ey = p[(i + 1) % len(p)] - p[i]
            nx, ny = ey, -ex
            pp = p @ (nx, ny)
            qq = q @ (nx, ny)
            if qq.min() > pp.max() or qq.max() < pp.min():
                return True
        return False

    if not (separated(a, b) or separated(b, a)):
        return 0.0

    def point_segment(pt, s0, s1):
        d = s1 - s0
        denom = float(d @ d)
        t = 0.0 if denom == 0.0 else float(np.clip((pt - s0) @ d / denom, 0, 1))
        return float(np.hypot(*(pt - (s0 + t * d))))

    best = math.inf
    for p, q in ((a, b), (b, a)):
        for pt in p:
            for i in range(len(q)):
                best = min(best, point_segment(pt, q[i], q[(i + 1) % len(q)]))
    return best


def _top_samples(box: OrientedBox3) -> np.ndarray:
    """(5, 3) top-face witness points: the four corners plus the centre."""
    out = np.empty((5, 3))
    out[:4] = box.corners()[4:]
    out[4] = (box.center[0], box.center[1], box.center[2] + 0.5 * box.dims[2])
    return out


def _side_samples(box: OrientedBox3) -> np.ndarray:
    """(4, 3) mid-height side-face centres."""
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    hx, hy = 0.5 * box.dims[0], 0.5 * box.dims[1]
    cx, cy, cz = box.center
    return np.array([(cx + c * hx, cy + s * hx, cz),
                     (cx - c * hx, cy - s * hx, cz),
                     (cx - s * hy, cy + c * hy, cz),
                     (cx + s * hy, cy - c * hy, cz)])


def _inflate(box: OrientedBox3, margin: float) -> OrientedBox3:
    return OrientedBox3(label=box.label, center=box.center,
                        dims=tuple(d + 2.0 * margin for d in box.dims),
                        yaw=box.yaw)


def _blocked(occluder: OrientedBox3, cameras: np.ndarray,
             samples: np.ndarray) -> np.ndarray:
    """(n_cam, n_smp) bool: occluder cuts the camera-to-sample segment."""
    n_cam, n_smp = cameras.shape[0], samples.shape[0]
    starts = np.repeat(cameras, n_smp, axis=0)
    ends = np.tile(samples, (n_cam, 1))
    hits = segments_intersect_box(starts, ends, occluder)
    return hits.reshape(n_cam, n_smp)


_CLEAR_MARGIN = 0.05


class _SightlineState:
    """Tracks which mid-side witnesses stay visible from which cameras.

    The invariant maintained across placements: every object's top-face
    witnesses are unobstructed from every camera, and from each camera at
    least one mid-height side centre is visible (not behind any box,
    including the object itself). Views satisfying this always capture an
    object's full footprint and at least the upper half of its height.
    """

    def __init__(self, cameras: np.ndarray) -> None:
        self.cameras = cameras
        self.side_clear: list[np.ndarray] = []
        self.sides: list[np.ndarray] = []

    def admits(self, box: OrientedBox3, placed: list[OrientedBox3]
               ) -> list[np.ndarray] | None:
        """Updated per-object side matrices if box fits, else None."""
        fat = _inflate(box, _CLEAR_MARGIN)
        tops = _top_samples(box)
        if any(_blocked(_inflate(other, _CLEAR_MARGIN), self.cameras,
                        tops).any() for other in placed):
            return None
        for pts in (_top_samples(other) for other in placed):
            if _blocked(fat, self.cameras, pts).any():
                return None
        sides = _side_samples(box)
        own = ~_blocked(box, self.cameras, sides)
        for other in placed:
            own &= ~_blocked(_inflate(other, _CLEAR_MARGIN),
                             self.cameras, sides)
        if not own.any(axis=1).all():
            return None
        updated = [own]
        for clear, pts in zip(self.side_clear, self.sides):
            nxt = clear & ~_blocked(fat, self.cameras, pts)
            if not nxt.any(axis=1).all():
                return None
            updated.append(nxt)
        return updated

    def commit(self, box: OrientedBox3, updated: list[np.ndarray]) -> None:
        self.sides.append(_side_samples(box))
        self.side_clear = updated[1:] + [updated[0]]


def generate_scene(seed: int, n_objects: int = 8,
                   room_dims: tuple[float, float, float] = (6.0, 6.0, 3.0),
                   min_gap: float = 0.5, wall_margin: float = 0.3,
                   max_attempts: int = 10_000,
                   categories: Sequence[str] | None = None,
                   placement_radius: float | None = None,
                   clear_cameras: Sequence[tuple[float, float, float]] | None
                   = None, max_restarts: int = 0) -> SyntheticScene:
    """Rejection-sample a feasible scene; deterministic under the seed.

    Objects are placed largest footprint first, each with up to
    max_attempts position/yaw draws; a draw is accepted when the footprint
    stays wall_margin from the walls and min_gap from every placed object.
    Raises PlacementError when an object cannot be placed; with
    max_restarts > 0 the whole scene is redrawn (same RNG stream) that many
    times before giving up.

    categories restricts the label pool, placement_radius confines
    footprints to a disk around the room centre, and clear_cameras lists
    viewpoints from which every object's witness points (top face and
    mid-height side centres) must be unobstructed by the other objects, so
    such viewpoints always see at least the upper half of everything.
    """
    if n_objects < 0:
        raise ConfigError("n_objects must be >= 0")
    if min_gap < 0 or wall_margin < 0:
        raise ConfigError("min_gap and wall_margin must be non-negative")
    if max_restarts < 0:
        raise ConfigError("max_restarts must be non-negative")
    room = tuple(float(v) for v in room_dims)
    rng = np.random.default_rng(seed)
    cats = list(CATEGORY_SIZE_RANGES) if categories is None else list(categories)
    unknown = [c for c in cats if c not in CATEGORY_SIZE_RANGES]
    if unknown:
        raise ConfigError(f"unknown categories: {unknown}")
    if not cats:
        raise ConfigError("categories must be non-empty")
    if placement_radius is not None and placement_radius <= 0:
        raise ConfigError("placement_radius must be positive")
    cam_pts = (np.asarray(clear_cameras, dtype=np.float64).reshape(-1, 3)
               if clear_cameras is not None else None)
    for restart in range(max_restarts + 1):
        try:
            objects = _place_objects(rng, n_objects, room, cats, min_gap,
                                     wall_margin, max_attempts,
                                     placement_radius, cam_pts)
        except PlacementError:
            if restart == max_restarts:
                raise
            continue
        return SyntheticScene(room_dims=room, objects=tuple(objects),
                              seed=seed)
    raise AssertionError("unreachable")


def _place_objects(rng: np.random.Generator, n_objects: int,
                   room: tuple[float, float, float], cats: list[str],
                   min_gap: float, wall_margin: float, max_attempts: int,
                   placement_radius: float | None,
                   cam_pts: np.ndarray | None) -> list[OrientedBox3]:
    if n_objects <= len(cats):
        labels = list(rng.choice(cats, size=n_objects, replace=False))
    else:
        labels = list(rng.choice(cats, size=n_objects, replace=True))
    sized = []
    for label in labels:
        lo, hi = CATEGORY_SIZE_RANGES[label]
        dims = tuple(float(rng.uniform(a, b)) for a, b in zip(lo, hi))
        sized.append((label, dims))
    sized.sort(key=lambda item: item[1][0] * item[1][1], reverse=True)

    placed: list[OrientedBox3] = []
    footprints: list[np.ndarray] = []
    sight = _SightlineState(cam_pts) if cam_pts is not None else None
    half_room = (0.5 * room[0], 0.5 * room[1])
    for label, dims in sized:
        if dims[2] > room[2]:
            raise PlacementError(f"{label} of height {dims[2]:.2f} cannot "
                                 f"fit a {room[2]:.2f}-high room")
        for attempt in range(max_attempts):
            yaw = float(rng.uniform(-math.pi, math.pi))
            c, s = abs(math.cos(yaw)), abs(math.sin(yaw))
            ex = 0.5 * (c * dims[0] + s * dims[1])
            ey = 0.5 * (s * dims[0] + c * dims[1])
            x_lo, x_hi = wall_margin + ex, room[0] - wall_margin - ex
            y_lo, y_hi = wall_margin + ey, room[1] - wall_margin - ey
            if placement_radius is not None:
                x_lo = max(x_lo, half_room[0] - placement_radius)
                x_hi = min(x_hi, half_room[0] + placement_radius)
                y_lo = max(y_lo, half_room[1] - placement_radius)
                y_hi = min(y_hi, half_room[1] + placement_radius)
            if x_lo >= x_hi or y_lo >= y_hi:
                continue
            center = (float(rng.uniform(x_lo, x_hi)),
                      float(rng.uniform(y_lo, y_hi)), 0.5 * dims[2])
            box = OrientedBox3(label=label, center=center, dims=dims, yaw=yaw)
            fp = box.footprint()
            if placement_radius is not None:
                radii = np.hypot(fp[:, 0] - half_room[0],
                                 fp[:, 1] - half_room[1])
                if float(radii.max()) > placement_radius:
                    continue
            if not all(_footprint_gap(fp, other) >= min_gap
                       for other in footprints):
                continue
            if sight is not None:
                updated = sight.admits(box, placed)
                if updated is None:
                    continue
                sight.commit(box, updated)
            placed.append(box)
            footprints.append(fp)
            break
        else:
            raise PlacementError(
                f"could not place {label} ({dims[0]:.2f} x {dims[1]:.2f}) "
                f"after {max_attempts} attempts with {len(placed)} objects "
                f"already in a {room[0]:.1f} x {room[1]:.1f} room")
    return placed


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class TrajectorySpec:
    """Waypoint camera path: linear interpolation between consecutive
    (position, yaw, pitch, roll) waypoints, frames_per_segment steps each.

    All waypoint positions must stay inside the room.
    """

    room_dims: tuple[float, float, float]
    waypoints: tuple[tuple[tuple[float, float, float], float, float, float], ...]
    frames_per_segment: int = 1

    def __post_init__(self):
        if not self.waypoints:
            raise ConfigError("trajectory needs at least one waypoint")
        if self.frames_per_segment < 1:
            raise ConfigError("frames_per_segment must be >= 1")
        room = tuple(float(v) for v in self.room_dims)
        norm = []
        for wp in self.waypoints:
            pos, yaw, pitch, roll = wp
            pos = tuple(float(v) for v in pos)
            vals = (*pos, float(yaw), float(pitch), float(roll))
            if not all(math.isfinite(v) for v in vals):
                raise ConfigError(f"non-finite waypoint {wp!r}")
            if not (0.0 <= pos[0] <= room[0] and 0.0 <= pos[1] <= room[1]
                    and 0.0 <= pos[2] <= room[2]):
                raise ConfigError(f"waypoint {pos} is outside the "
                                  f"{room[0]} x {room[1]} x {room[2]} room")
            norm.append((pos, float(yaw), float(pitch), float(roll)))
        object.__setattr__(self, "room_dims", room)
        object.__setattr__(self, "waypoints", tuple(norm))

    def poses(self) -> list[tuple[tuple[float, float, float], float, float, float]]:
        """Interpolated (position, yaw, pitch, roll) list; angles take the
        shortest arc between waypoints."""
        if len(self.waypoints) == 1:
            return [self.waypoints[0]]
        out = []
        for a, b in zip(self.waypoints, self.waypoints[1:]):
            for k in range(self.frames_per_segment):
                f = k / self.frames_per_segment
                pos = tuple(pa + f * (pb - pa) for pa, pb in zip(a[0], b[0]))
                angles = tuple(
                    ang_a + f * math.remainder(ang_b - ang_a, math.tau)
                    for ang_a, ang_b in zip(a[1:], b[1:]))
                out.append((pos, *angles))
        out.append(self.waypoints[-1])
        return out


def orbit_trajectory(room_dims, n_frames: int = 24, height: float = 1.8,
                     radius: float | None = None,
                     look_at_height: float = 0.5,
                     start_angle: float = 0.0) -> TrajectorySpec:
    """Full-coverage circular path around the room center, looking inward.

    One waypoint per frame (no interpolation); yaw faces the room center
    and pitch dips toward look_at_height, so a full loop observes every
    object from all sides.
    """
    if n_frames < 1:
        raise ConfigError("n_frames must be >= 1")
    room = tuple(float(v) for v in room_dims)
    cx, cy = 0.5 * room[0], 0.5 * room[1]
    if radius is None:
        radius = max(0.5, min(room[0], room[1]) / 2.0 - 0.7)
    if height > room[2]:
        raise ConfigError(f"camera height {height} above the ceiling {room[2]}")
    waypoints = []
    for k in range(n_frames):
        phi = start_angle + math.tau * k / n_frames
        x = cx + radius * math.cos(phi)
        y = cy + radius * math.sin(phi)
        dx, dy, dz = cx - x, cy - y, look_at_height - height
        yaw = math.atan2(dy, dx)
        pitch = math.atan2(dz, math.hypot(dx, dy))
        waypoints.append(((x, y, height), yaw, pitch, 0.0))
    return TrajectorySpec(room_dims=room, waypoints=tuple(waypoints),
                          frames_per_segment=1)


# ---------------------------------------------------------------------------
# rendering


def render_frame(scene: SyntheticScene, pose_params, intrinsics: CameraIntrinsics,
                 label_flip_prob: float = 0.0, rng=None
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Exact depth + semantic maps for one camera pose.

    pose_params is (position, yaw, pitch, roll). The semantic map holds
    vocabulary indices (floor = 0); pixels that hit nothing have depth 0.
    label_flip_prob > 0 reassigns each object pixel to a uniformly-drawn
    *different* category with that probability (rng required).
    """
    position, yaw, pitch, roll = pose_params
    pose = camera_pose(position, yaw, pitch, roll)
    boxes = np.array([box.params() for box in scene.objects]).reshape(-1, 7)
    sem_values = np.array([scene.semantic_id(box.label)
                           for box in scene.objects], dtype=np.uint16)
    depth, sem = kernels.render_boxes(
        boxes, sem_values, (0.0, scene.room_dims[0], 0.0, scene.room_dims[1]),
        pose.rotation, pose.translation,
        intrinsics.fx, intrinsics.fy, intrinsics.cx, intrinsics.cy,
        intrinsics.width, intrinsics.height)
    if label_flip_prob > 0.0:
        if rng is None:
            raise ConfigError("label_flip_prob > 0 requires an rng")
        n_cats = len(scene.vocabulary) - 1
        flip = (depth > 0) & (sem > 0) & (rng.random(sem.shape) < label_flip_prob)
        if flip.any():
            # shift by 1..n_cats-1 within the category range: never the
            # original label, uniform over the others
            shift = rng.integers(1, n_cats, size=int(flip.sum()),
                                 dtype=np.int64)
            sem = sem.copy()
            sem[flip] = (1 + (sem[flip].astype(np.int64) - 1 + shift)
                         % n_cats).astype(np.uint16)
    return depth, sem


# ---------------------------------------------------------------------------
# oracle detector


@dataclass(frozen=True)
class OracleDetector:
    """Geometric detector over labeled memory points.

    Per category: single-linkage clustering at cluster_eps, then a
    minimum-area rectangle (xy) plus z extent per cluster with at least
    min_points members. Output is serialized scene-description text, so
    the oracle plugs in anywhere a learned detector would.
    """

    cluster_eps: float = 0.3
    min_points: int = 20
    min_extent: float = 0.02

    def __post_init__(self):
        if not (self.cluster_eps > 0):
            raise ConfigError("cluster_eps must be positive")
        if self.min_points < 1:
            raise ConfigError("min_points must be >= 1")
        if not (self.min_extent > 0):
            raise ConfigError("min_extent must be positive")

    def detect_boxes(self, positions: np.ndarray, labels: np.ndarray,
                     vocab: tuple[str, ...],
                     categories: tuple[str, ...]) -> list[OrientedBox3]:
        positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        labels = np.asarray(labels).reshape(-1)
        out: list[OrientedBox3] = []
        for label in categories:
            if label not in vocab:
                continue
            pts = positions[labels == vocab.index(label)]
            if pts.shape[0] < self.min_points:
                continue
            for cluster in _link_clusters(pts, self.cluster_eps):
                if cluster.shape[0] < self.min_points:
                    continue
                try:
                    center_xy, dims_xy, yaw = min_area_rect(cluster[:, :2])
                except GeometryError:
                    continue
                z0 = float(cluster[:, 2].min())
                z1 = float(cluster[:, 2].max())
                out.append(OrientedBox3(
                    label=label,
                    center=(center_xy[0], center_xy[1], 0.5 * (z0 + z1)),
                    dims=(max(dims_xy[0], self.min_extent),
                          max(dims_xy[1], self.min_extent),
                          max(z1 - z0, self.min_extent)),
                    yaw=yaw))
        return out

    def detect(self, snapshot, categories: tuple[str, ...]) -> str:
        boxes = self.detect_boxes(snapshot.positions, snapshot.labels,
                                  snapshot.vocab, tuple(categories))
        return serialize(description_from_boxes(boxes))


def _link_clusters(points: np.ndarray, eps: float) -> list[np.ndarray]:
    """Single-linkage components of a point set at distance threshold eps."""
    n = points.shape[0]
    if n == 0:
        return []
    pairs = cKDTree(points).query_pairs(eps, output_type="ndarray")
    if pairs.size:
        ones = np.ones(pairs.shape[0], dtype=np.int8)
        graph = coo_matrix((ones, (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    else:
        graph = coo_matrix((n, n), dtype=np.int8)
    _, comp = connected_components(graph, directed=False)
    return [points[comp == c] for c in range(comp.max() + 1)]


# ---------------------------------------------------------------------------
# dataset export


def transform_box(transform: RigidTransform, box: OrientedBox3) -> OrientedBox3:
    """Move a z-aligned box through a gravity-preserving rigid transform.

    The transform's rotation must keep +z fixed (pure yaw), otherwise the
    7-DoF parametrization cannot represent the result.
    """
    rot = transform.rotation
    if abs(rot[2, 2] - 1.0) > 1e-9 or abs(rot[2, 0]) > 1e-9 or abs(rot[2, 1]) > 1e-9:
        raise GeometryError("transform does not preserve the z axis; "
                            "cannot carry a yaw-only box through it")
    delta_yaw = math.atan2(rot[1, 0], rot[0, 0])
    return OrientedBox3(label=box.label,
                        center=tuple(transform.apply(np.array(box.center))),
                        dims=box.dims,
                        yaw=normalize_angle(box.yaw + delta_yaw))


def export_dataset(scene: SyntheticScene, trajectory: TrajectorySpec,
                   intrinsics: CameraIntrinsics, out_dir, *,
                   scene_id: str | None = None,
                   label_flip_prob: float = 0.0, seed: int = 0) -> Path:
    """Render a trajectory into a harness-loadable dataset directory.

    Writes grid files under frames/, the manifest, and the ground-truth
    scene description. Annotations are stored in the ground-aligned frame
    of the first camera (the frame all replay outputs live in). Returns
    the manifest path.
    """
    if not (0.0 <= label_flip_prob <= 1.0):
        raise ConfigError("label_flip_prob must be in [0, 1]")
    out = Path(out_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    poses = trajectory.poses()
    rng = np.random.default_rng(seed)

    frames = []
    for i, pose_params in enumerate(poses):
        depth, sem = render_frame(scene, pose_params, intrinsics,
                                  label_flip_prob, rng)
        depth_rel = f"frames/depth_{i:04d}.grid"
        sem_rel = f"frames/semantic_{i:04d}.grid"
        write_grid(out / depth_rel, depth)
        write_grid(out / sem_rel, sem)
        position, yaw, pitch, roll = pose_params
        frames.append({
            "index": i,
            "timestamp": float(i),
            "depth": depth_rel,
            "semantic": sem_rel,
            "pose": {"position": [float(v) for v in position],
                     "yaw": float(yaw), "pitch": float(pitch),
                     "roll": float(roll)},
        })

    first = poses[0]
    world_to_unified = ground_align_transform(first[2], first[3]).compose(
        camera_pose(first[0], first[1], first[2], first[3]).inverse())
    unified_boxes = [transform_box(world_to_unified, box)
                     for box in scene.objects]
    annotations = [{
        "id": f"obj_{j}",
        "label": box.label,
        "center": [float(v) for v in box.center],
        "dims": [float(v) for v in box.dims],
        "yaw": float(box.yaw),
    } for j, box in enumerate(unified_boxes)]

    description = description_from_boxes(unified_boxes, id_prefix="obj")
    (out / "scene.txt").write_text(serialize(description))

    manifest = {
        "format": "scenestream-dataset",
        "version": 1,
        "scene_id": scene_id or f"scene_{scene.seed:04d}",
        "intrinsics": {"fx": intrinsics.fx, "fy": intrinsics.fy,
                       "cx": intrinsics.cx, "cy": intrinsics.cy,
                       "width": intrinsics.width, "height": intrinsics.height},
        "conventions": {
            "camera_axes": "x right, y down, z forward",
            "world_axes": "z up, floor at z = 0",
            "annotation_frame": "ground-aligned at the first camera "
                                "(z up, origin at its position)",
            "depth": "meters; 0 marks invalid pixels",
            "semantic": "vocabulary indices; 0 is the background surface",
        },
        "vocabulary": list(scene.vocabulary),
        "frames": frames,
        "annotations": annotations,
        "scene_description": "scene.txt",
        "label_flip_prob": float(label_flip_prob),
        "room_dims": [float(v) for v in scene.room_dims],
        "seed": int(scene.seed),
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True)
                             + "\n")
    return manifest_path
