"""Shared fixtures: small scenes, datasets, and random-box helpers."""

import numpy as np
import pytest

from scenestream.geometry import CameraIntrinsics, OrientedBox3
from scenestream.memory import SpatialMemory
from scenestream.simulator import (export_dataset, generate_scene,
                                   orbit_trajectory)


def make_random_box(rng, label="chair"):
    """One box with center in [-1,1]^3, extents in [0.3, 2], free yaw."""
    return OrientedBox3(
        label=label,
        center=tuple(rng.uniform(-1.0, 1.0, 3)),
        dims=tuple(rng.uniform(0.3, 2.0, 3)),
        yaw=float(rng.uniform(-np.pi, np.pi)),
    )


def make_random_snapshot(rng, vocab=("floor", "chair", "table"),
                         capacity=4, budget=64, n_frames=3):
    """Spatial memory fed a few random frames, returned as a snapshot."""
    store = SpatialMemory(capacity, budget, vocab)
    for _ in range(n_frames):
        n = int(rng.integers(10, 200))
        store.fuse(rng.uniform(-4, 4, (n, 3)),
                   rng.uniform(0, 1, (n, 3)),
                   rng.integers(0, len(vocab), n),
                   rng)
    return store.snapshot()


@pytest.fixture(scope="session")
def small_intrinsics():
    return CameraIntrinsics(fx=60.0, fy=60.0, cx=48.0, cy=36.0,
                            width=96, height=72)


@pytest.fixture(scope="session")
def small_scene():
    return generate_scene(seed=5, n_objects=4, room_dims=(6.0, 6.0, 3.0))


@pytest.fixture(scope="session")
def small_dataset_dir(tmp_path_factory, small_scene, small_intrinsics):
    """A rendered 8-frame orbit dataset for harness/CLI tests."""
    out = tmp_path_factory.mktemp("dataset") / "scene"
    trajectory = orbit_trajectory(small_scene.room_dims, n_frames=8)
    export_dataset(small_scene, trajectory, small_intrinsics, out)
    return out
