"""Scene generation, trajectories, exact rendering, and the oracle detector."""

import json
import math

import numpy as np
import pytest

from scenestream.errors import ConfigError, GeometryError, PlacementError
from scenestream.geometry import (OrientedBox3, RigidTransform, camera_pose,
                                  iou3d, rot_z, segments_intersect_box,
                                  unproject_depth)
from scenestream.scene_format import parse_scene_description
from scenestream.simulator import (CATEGORY_SIZE_RANGES, DEFAULT_VOCABULARY,
                                   FLOOR_LABEL, OracleDetector, SyntheticScene,
                                   TrajectorySpec, export_dataset,
                                   generate_scene, orbit_trajectory,
                                   render_frame, transform_box)


def footprint_distance(a, b):
    """Distance between convex CCW polygons (0 when they overlap)."""
    def separated(p, q):
        for i in range(len(p)):
            ex, ey = p[(i + 1) % len(p)] - p[i]
            axis = np.array([ey, -ex])
            pp, qq = p @ axis, q @ axis
            if qq.min() > pp.max() or qq.max() < pp.min():
                return True
        return False

    if not (separated(a, b) or separated(b, a)):
        return 0.0
    best = math.inf
    for p, q in ((a, b), (b, a)):
        for pt in p:
            for i in range(len(q)):
                s0, s1 = q[i], q[(i + 1) % len(q)]
                d = s1 - s0
                t = np.clip((pt - s0) @ d / max(float(d @ d), 1e-30), 0, 1)
                best = min(best, float(np.hypot(*(pt - (s0 + t * d)))))
    return best


# ---------------------------------------------------------------------------
# scene generation


def test_generation_is_deterministic_per_seed():
    a = generate_scene(7, n_objects=5)
    b = generate_scene(7, n_objects=5)
    c = generate_scene(8, n_objects=5)
    assert a.objects == b.objects
    assert a.objects != c.objects


def test_empty_scene():
    scene = generate_scene(0, n_objects=0)
    assert scene.objects == ()
    assert scene.vocabulary == DEFAULT_VOCABULARY


def test_ten_objects_fit_the_default_room():
    for seed in range(25):
        scene = generate_scene(seed, n_objects=10, max_restarts=6)
        assert len(scene.objects) == 10


def test_objects_respect_min_gap_and_margins():
    for seed in range(10):
        scene = generate_scene(seed, n_objects=8, min_gap=0.5,
                               wall_margin=0.3)
        prints = [box.footprint() for box in scene.objects]
        for i in range(len(prints)):
            fp = prints[i]
            assert fp[:, 0].min() >= 0.3 - 1e-9
            assert fp[:, 0].max() <= 6.0 - 0.3 + 1e-9
            assert fp[:, 1].min() >= 0.3 - 1e-9
            assert fp[:, 1].max() <= 6.0 - 0.3 + 1e-9
            for j in range(i + 1, len(prints)):
                assert footprint_distance(fp, prints[j]) >= 0.5 - 1e-9


def test_objects_rest_on_the_floor_with_valid_sizes():
    scene = generate_scene(3, n_objects=8)
    for box in scene.objects:
        assert box.center[2] == pytest.approx(0.5 * box.dims[2])
        lo, hi = CATEGORY_SIZE_RANGES[box.label]
        for d, a, b in zip(box.dims, lo, hi):
            assert a - 1e-9 <= d <= b + 1e-9


def test_placement_radius_confines_footprints():
    scene = generate_scene(4, n_objects=5, room_dims=(10.0, 10.0, 3.0),
                           placement_radius=3.0)
    for box in scene.objects:
        fp = box.footprint()
        radii = np.hypot(fp[:, 0] - 5.0, fp[:, 1] - 5.0)
        assert radii.max() <= 3.0 + 1e-9


def test_category_restriction():
    scene = generate_scene(5, n_objects=4, categories=("chair", "table"))
    assert {box.label for box in scene.objects} <= {"chair", "table"}


def test_generation_validation():
    with pytest.raises(ConfigError):
        generate_scene(0, n_objects=-1)
    with pytest.raises(ConfigError):
        generate_scene(0, categories=("chair", "lamp"))
    with pytest.raises(ConfigError):
        generate_scene(0, categories=())
    with pytest.raises(ConfigError):
        generate_scene(0, placement_radius=0.0)
    with pytest.raises(ConfigError):
        generate_scene(0, max_restarts=-1)


def test_impossible_packing_raises():
    with pytest.raises(PlacementError):
        generate_scene(0, n_objects=10, room_dims=(2.0, 2.0, 3.0),
                       min_gap=1.0, max_attempts=50)


def test_scene_rejects_escaping_objects():
    outside = OrientedBox3("chair", (7.0, 3.0, 0.5), (1.0, 1.0, 1.0), 0.0)
    with pytest.raises(ConfigError):
        SyntheticScene(room_dims=(6.0, 6.0, 3.0), objects=(outside,))


def test_clear_cameras_keep_witnesses_unobstructed():
    cams = [(6.0 + 5.4 * math.cos(p), 6.0 + 5.4 * math.sin(p), 3.6)
            for p in np.linspace(0.0, math.tau, 8, endpoint=False)]
    scene = generate_scene(11, n_objects=4, room_dims=(12.0, 12.0, 4.0),
                           min_gap=0.5, placement_radius=3.6,
                           clear_cameras=cams, max_restarts=3,
                           categories=("chair", "table", "sofa", "bookcase"))
    cam_arr = np.array(cams)
    for target in scene.objects:
        tops = np.vstack([target.corners()[4:],
                          [[target.center[0], target.center[1],
                            target.center[2] + 0.5 * target.dims[2]]]])
        for other in scene.objects:
            if other is target:
                continue
            for cam in cam_arr:
                starts = np.repeat(cam[None, :], len(tops), axis=0)
                assert not segments_intersect_box(starts, tops, other).any()


# ---------------------------------------------------------------------------
# trajectories


def test_orbit_covers_a_full_circle():
    traj = orbit_trajectory((6.0, 6.0, 3.0), n_frames=12, height=1.8,
                            radius=2.0)
    poses = traj.poses()
    assert len(poses) == 12
    for pos, yaw, pitch, roll in poses:
        assert np.hypot(pos[0] - 3.0, pos[1] - 3.0) == pytest.approx(2.0)
        assert pos[2] == 1.8
        assert yaw == pytest.approx(math.atan2(3.0 - pos[1], 3.0 - pos[0]))
        assert pitch < 0  # dips toward the floor
        assert roll == 0.0
    angles = [math.atan2(p[0][1] - 3.0, p[0][0] - 3.0) for p in poses]
    gaps = np.diff(np.unwrap(angles))
    np.testing.assert_allclose(gaps, math.tau / 12, atol=1e-9)


def test_orbit_validation():
    with pytest.raises(ConfigError):
        orbit_trajectory((6.0, 6.0, 3.0), n_frames=0)
    with pytest.raises(ConfigError):
        orbit_trajectory((6.0, 6.0, 3.0), height=4.5)


def test_trajectory_interpolates_between_waypoints():
    spec = TrajectorySpec(
        room_dims=(6.0, 6.0, 3.0),
        waypoints=(((1.0, 1.0, 1.0), 0.0, 0.0, 0.0),
                   ((3.0, 1.0, 1.0), 1.0, -0.4, 0.0)),
        frames_per_segment=4)
    poses = spec.poses()
    assert len(poses) == 5
    assert poses[0][0] == (1.0, 1.0, 1.0)
    assert poses[-1][0] == (3.0, 1.0, 1.0)
    assert poses[2][0][0] == pytest.approx(2.0)
    assert poses[2][1] == pytest.approx(0.5)
    assert poses[2][2] == pytest.approx(-0.2)


def test_trajectory_takes_shortest_angular_arc():
    spec = TrajectorySpec(
        room_dims=(6.0, 6.0, 3.0),
        waypoints=(((1.0, 1.0, 1.0), 3.0, 0.0, 0.0),
                   ((1.0, 1.0, 1.0), -3.0, 0.0, 0.0)),
        frames_per_segment=2)
    mid_yaw = spec.poses()[1][1]
    assert abs(mid_yaw) == pytest.approx(math.pi, abs=1e-9)


def test_trajectory_validation():
    with pytest.raises(ConfigError):
        TrajectorySpec(room_dims=(6.0, 6.0, 3.0), waypoints=())
    with pytest.raises(ConfigError):
        TrajectorySpec(room_dims=(6.0, 6.0, 3.0),
                       waypoints=(((9.0, 1.0, 1.0), 0.0, 0.0, 0.0),))
    with pytest.raises(ConfigError):
        TrajectorySpec(room_dims=(6.0, 6.0, 3.0),
                       waypoints=(((1.0, 1.0, 1.0), 0.0, 0.0, 0.0),) * 2,
                       frames_per_segment=0)


# ---------------------------------------------------------------------------
# rendering


def on_box_surface(point, box, tol=1e-5):
    local = rot_z(-box.yaw) @ (np.asarray(point) - np.asarray(box.center))
    half = 0.5 * np.asarray(box.dims)
    if (np.abs(local) > half + tol).any():
        return False
    return (half - np.abs(local)).min() <= tol


def test_unprojected_pixels_land_on_scene_surfaces(small_intrinsics):
    scene = generate_scene(2, n_objects=3)
    pose_params = ((0.8, 0.8, 1.6), math.radians(45.0), -0.5, 0.0)
    depth, sem = render_frame(scene, pose_params, small_intrinsics)
    assert (depth > 0).any()
    points_cam, idx = unproject_depth(depth, small_intrinsics)
    pose = camera_pose(*pose_params)
    world = pose.apply(points_cam)
    sem_flat = sem.ravel()[idx]
    for point, sid in zip(world[::37], sem_flat[::37]):
        if sid == 0:
            assert abs(point[2]) < 1e-5  # floor
        else:
            label = scene.vocabulary[sid]
            assert any(on_box_surface(point, box)
                       for box in scene.objects if box.label == label)


def test_empty_scene_renders_floor_only(small_intrinsics):
    scene = SyntheticScene(room_dims=(6.0, 6.0, 3.0), objects=())
    depth, sem = render_frame(scene, ((3.0, 3.0, 1.8), 0.0, -0.6, 0.0),
                              small_intrinsics)
    assert (sem == 0).all()
    assert (depth > 0).any()


def test_frontal_box_depth_is_exact(small_intrinsics):
    box = OrientedBox3("bookcase", (3.0, 3.0, 1.0), (0.5, 3.0, 2.0), 0.0)
    scene = SyntheticScene(room_dims=(6.0, 6.0, 3.0), objects=(box,))
    depth, sem = render_frame(scene, ((1.0, 3.0, 1.0), 0.0, 0.0, 0.0),
                              small_intrinsics)
    row = int(small_intrinsics.cy)
    col = int(small_intrinsics.cx)
    assert depth[row, col] == pytest.approx(1.75, abs=1e-6)
    assert sem[row, col] == DEFAULT_VOCABULARY.index("bookcase")


def test_label_flips_change_only_object_pixels(small_intrinsics):
    scene = generate_scene(6, n_objects=4)
    pose_params = ((3.0, 0.8, 1.8), math.radians(90.0), -0.5, 0.0)
    depth0, sem0 = render_frame(scene, pose_params, small_intrinsics)
    depth1, sem1 = render_frame(scene, pose_params, small_intrinsics,
                                label_flip_prob=1.0,
                                rng=np.random.default_rng(0))
    np.testing.assert_array_equal(depth0, depth1)
    objects = sem0 > 0
    assert (sem1[objects] != sem0[objects]).all()
    assert (sem1[~objects] == sem0[~objects]).all()
    assert sem1.max() < len(DEFAULT_VOCABULARY)
    assert (sem1[objects] >= 1).all()


def test_label_flip_requires_rng(small_intrinsics):
    scene = generate_scene(6, n_objects=2)
    with pytest.raises(ConfigError):
        render_frame(scene, ((3.0, 0.8, 1.8), 1.57, -0.5, 0.0),
                     small_intrinsics, label_flip_prob=0.5)


# ---------------------------------------------------------------------------
# oracle detector


def surface_cloud(box, per_face=24):
    frac = (np.arange(per_face) + 0.5) / per_face - 0.5
    u, v = np.meshgrid(frac, frac, indexing="ij")
    u, v = u.ravel(), v.ravel()
    half = np.full(u.shape, 0.5)
    pts = []
    for axis in range(3):
        for sign in (-1.0, 1.0):
            block = np.empty((u.size, 3))
            others = [a for a in range(3) if a != axis]
            block[:, axis] = sign * half
            block[:, others[0]] = u
            block[:, others[1]] = v
            pts.append(block)
    local = np.concatenate(pts) * np.asarray(box.dims)
    return local @ rot_z(box.yaw).T + np.asarray(box.center)


def test_oracle_recovers_a_dense_box():
    box = OrientedBox3("chair", (1.0, 2.0, 0.4), (0.6, 0.5, 0.8), 0.7)
    pts = surface_cloud(box)
    labels = np.full(len(pts), DEFAULT_VOCABULARY.index("chair"))
    found = OracleDetector().detect_boxes(pts, labels, DEFAULT_VOCABULARY,
                                          ("chair",))
    assert len(found) == 1
    assert found[0].label == "chair"
    assert iou3d(found[0], box) >= 0.9


def test_oracle_detection_rotates_with_the_points():
    box = OrientedBox3("table", (0.0, 0.0, 0.35), (1.2, 0.8, 0.7), 0.0)
    pts = surface_cloud(box)
    labels = np.full(len(pts), DEFAULT_VOCABULARY.index("table"))
    oracle = OracleDetector()
    for angle in (0.3, 1.1, 2.5):
        rotated = pts @ rot_z(angle).T
        found = oracle.detect_boxes(rotated, labels, DEFAULT_VOCABULARY,
                                    ("table",))
        truth = OrientedBox3("table", tuple(rot_z(angle) @ box.center),
                             box.dims, angle)
        assert len(found) == 1
        assert iou3d(found[0], truth) >= 0.9


def test_oracle_separates_distant_clusters():
    a = OrientedBox3("chair", (0.0, 0.0, 0.4), (0.5, 0.5, 0.8), 0.0)
    b = OrientedBox3("chair", (4.0, 0.0, 0.4), (0.5, 0.5, 0.8), 0.4)
    pts = np.vstack([surface_cloud(a), surface_cloud(b)])
    labels = np.full(len(pts), DEFAULT_VOCABULARY.index("chair"))
    found = OracleDetector().detect_boxes(pts, labels, DEFAULT_VOCABULARY,
                                          ("chair",))
    assert len(found) == 2
    ious = sorted(max(iou3d(f, a), iou3d(f, b)) for f in found)
    assert ious[0] >= 0.9


def test_oracle_abstains_below_min_points():
    box = OrientedBox3("chair", (0.0, 0.0, 0.4), (0.5, 0.5, 0.8), 0.0)
    pts = surface_cloud(box, per_face=2)  # 24 points
    labels = np.full(len(pts), DEFAULT_VOCABULARY.index("chair"))
    assert OracleDetector(min_points=25).detect_boxes(
        pts, labels, DEFAULT_VOCABULARY, ("chair",)) == []
    assert OracleDetector().detect_boxes(
        np.empty((0, 3)), np.empty(0, dtype=int),
        DEFAULT_VOCABULARY, ("chair",)) == []


def test_oracle_ignores_other_categories():
    box = OrientedBox3("chair", (0.0, 0.0, 0.4), (0.5, 0.5, 0.8), 0.0)
    pts = surface_cloud(box)
    labels = np.full(len(pts), DEFAULT_VOCABULARY.index("chair"))
    assert OracleDetector().detect_boxes(pts, labels, DEFAULT_VOCABULARY,
                                         ("table",)) == []


def test_oracle_validation():
    with pytest.raises(ConfigError):
        OracleDetector(cluster_eps=0.0)
    with pytest.raises(ConfigError):
        OracleDetector(min_points=0)
    with pytest.raises(ConfigError):
        OracleDetector(min_extent=-1.0)


# ---------------------------------------------------------------------------
# box transforms and export


def test_transform_box_matches_corner_transform():
    box = OrientedBox3("sofa", (1.0, 2.0, 0.4), (1.8, 0.9, 0.8), 0.6)
    move = RigidTransform(rotation=rot_z(1.1), translation=(3.0, -1.0, 0.5))
    out = transform_box(move, box)
    np.testing.assert_allclose(out.corners(), move.apply(box.corners()),
                               atol=1e-9)
    assert out.label == box.label
    assert out.dims == box.dims


def test_transform_box_rejects_tilts():
    box = OrientedBox3("sofa", (1.0, 2.0, 0.4), (1.8, 0.9, 0.8), 0.6)
    tilted = camera_pose((0.0, 0.0, 0.0), 0.3, -0.4, 0.0)
    with pytest.raises(GeometryError):
        transform_box(tilted, box)


def test_export_writes_a_complete_dataset(small_dataset_dir):
    manifest_path = small_dataset_dir / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    assert manifest["format"] == "scenestream-dataset"
    assert manifest["vocabulary"][0] == FLOOR_LABEL
    assert len(manifest["frames"]) == 8
    for frame in manifest["frames"]:
        assert (small_dataset_dir / frame["depth"]).exists()
        assert (small_dataset_dir / frame["semantic"]).exists()
    assert len(manifest["annotations"]) == 4
    scene_text = (small_dataset_dir / "scene.txt").read_text()
    parsed = parse_scene_description(scene_text)
    assert parsed.diagnostics == ()
    assert len(parsed.description.bboxes) == 4


def test_export_annotations_live_in_first_camera_ground_frame(tmp_path,
                                                              small_intrinsics):
    scene = generate_scene(9, n_objects=3)
    traj = orbit_trajectory(scene.room_dims, n_frames=4, height=1.8)
    manifest_path = export_dataset(scene, traj, small_intrinsics,
                                   tmp_path / "ds")
    manifest = json.loads(manifest_path.read_text())
    first = manifest["frames"][0]["pose"]
    cam_xy = np.array(first["position"][:2])
    for ann, box in zip(manifest["annotations"], scene.objects):
        assert ann["label"] == box.label
        np.testing.assert_allclose(ann["dims"], box.dims, atol=1e-12)
        # distance to the camera is preserved by the frame change
        d_world = np.hypot(*(np.array(box.center[:2]) - cam_xy))
        d_unified = np.hypot(ann["center"][0], ann["center"][1])
        assert d_unified == pytest.approx(d_world, abs=1e-9)
