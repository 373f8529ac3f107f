"""Bounded point memory: fusion schedule, size law, retention, container."""

from fractions import Fraction

import numpy as np
import pytest

from scenestream.errors import ConfigError, DatasetError
from scenestream.memory import (FusionSchedule, SpatialMemory, from_bytes,
                                fuse, read_container, to_bytes,
                                write_container, write_ply)

VOCAB = ("floor", "chair", "table")


def _frame(rng, n, n_labels=len(VOCAB)):
    return (rng.uniform(-5, 5, (n, 3)), rng.uniform(0, 1, (n, 3)),
            rng.integers(0, n_labels, n))


# ---------------------------------------------------------------------------
# schedule


def test_schedule_spot_values():
    sched = FusionSchedule(capacity=4, budget=100)
    assert sched.incoming_sample_ratio(3) == Fraction(1)
    assert sched.incoming_sample_ratio(5) == Fraction(1)   # 4/(5-1)
    assert sched.incoming_sample_ratio(8) == Fraction(4, 7)
    assert sched.retain_ratio(4) == Fraction(1)
    assert sched.retain_ratio(5) == Fraction(4, 5)
    assert sched.retain_ratio(8) == Fraction(7, 8)


def test_schedule_ratios_are_exact_fractions():
    sched = FusionSchedule(capacity=6, budget=50)
    for t in range(1, 40):
        inc, ret = sched.incoming_sample_ratio(t), sched.retain_ratio(t)
        assert isinstance(inc, Fraction) and isinstance(ret, Fraction)
        assert 0 < inc <= 1 and 0 < ret <= 1


def test_frame_draw_rounds_half_up():
    # ratio 3/6 of budget 5 = 2.5 -> 3
    assert FusionSchedule(capacity=3, budget=5).frame_draw(7) == 3
    assert FusionSchedule(capacity=4, budget=100).frame_draw(9) == 50


def test_schedule_validation():
    with pytest.raises(ConfigError):
        FusionSchedule(capacity=0, budget=10)
    with pytest.raises(ConfigError):
        FusionSchedule(capacity=2, budget=0)
    with pytest.raises(ValueError):
        FusionSchedule(capacity=2, budget=10).incoming_sample_ratio(0)


# ---------------------------------------------------------------------------
# size law and pairing


@pytest.mark.parametrize("capacity,budget", [(2, 7), (4, 100)])
def test_size_law_exact_over_stream(capacity, budget):
    rng = np.random.default_rng(0)
    store = SpatialMemory(capacity, budget, VOCAB)
    for t in range(1, 51):
        n = int(rng.integers(1, 3 * budget))  # above and below the budget
        store.fuse(*_frame(rng, n), rng)
        assert store.size == min(t, capacity) * budget


def test_small_frames_padded_to_budget():
    rng = np.random.default_rng(1)
    store = SpatialMemory(3, 64, VOCAB)
    store.fuse(*_frame(rng, 5), rng)  # 5 points stretched to 64
    assert store.size == 64
    assert len(np.unique(store.snapshot().positions, axis=0)) <= 5


def test_labels_track_their_points():
    # encode the label into the x coordinate; pairing must survive fusion
    rng = np.random.default_rng(2)
    store = SpatialMemory(4, 50, VOCAB)
    for _ in range(40):
        n = int(rng.integers(10, 120))
        labels = rng.integers(0, len(VOCAB), n)
        positions = rng.uniform(-5, 5, (n, 3))
        positions[:, 0] = labels.astype(np.float64)
        store.fuse(positions, rng.uniform(0, 1, (n, 3)), labels, rng)
        snap = store.snapshot()
        np.testing.assert_array_equal(snap.positions[:, 0].astype(np.int64),
                                      snap.labels.astype(np.int64))


def test_empty_frame_skipped_but_time_advances():
    rng = np.random.default_rng(3)
    store = SpatialMemory(4, 32, VOCAB)
    store.fuse(*_frame(rng, 40), rng)
    size_before = store.size
    store.fuse(np.empty((0, 3)), np.empty((0, 3)), np.empty(0, dtype=int), rng)
    assert store.t == 2
    assert store.fused_frames == 1
    assert store.skipped_frames == 1
    assert store.size == size_before


def test_origins_within_time_range():
    rng = np.random.default_rng(4)
    store = SpatialMemory(3, 40, VOCAB)
    for t in range(1, 20):
        store.fuse(*_frame(rng, 100), rng)
        origins = store.snapshot().origins
        assert origins.min() >= 1
        assert origins.max() <= t


def test_identical_seeds_give_identical_memories():
    def run(seed):
        rng = np.random.default_rng(seed)
        frames_rng = np.random.default_rng(99)  # same frames both runs
        store = SpatialMemory(4, 64, VOCAB)
        for _ in range(12):
            store.fuse(*_frame(frames_rng, 80), rng)
        return store.snapshot()

    a, b = run(7), run(7)
    c = run(8)
    assert a.positions.tobytes() == b.positions.tobytes()
    assert a.labels.tobytes() == b.labels.tobytes()
    assert a.origins.tobytes() == b.origins.tobytes()
    assert a.positions.tobytes() != c.positions.tobytes()


def test_retention_mean_matches_uniform_share():
    # after 8 frames with capacity 4 and budget 100, frame 1 keeps ~50 points
    counts = []
    frames_rng = np.random.default_rng(0)
    frames = [_frame(frames_rng, 300) for _ in range(8)]
    for seed in range(200):
        rng = np.random.default_rng(seed)
        store = SpatialMemory(4, 100, VOCAB)
        for frame in frames:
            store.fuse(*frame, rng)
        counts.append(int((store.snapshot().origins == 1).sum()))
    mean = float(np.mean(counts))
    assert abs(mean - 50.0) / 50.0 < 0.075


def test_fuse_wrapper_returns_same_store():
    rng = np.random.default_rng(5)
    store = SpatialMemory(2, 16, VOCAB)
    out = fuse(store, *_frame(rng, 30), rng)
    assert out is store
    assert out.size == 16


# ---------------------------------------------------------------------------
# input validation


def test_fuse_validates_inputs():
    rng = np.random.default_rng(6)
    store = SpatialMemory(2, 16, VOCAB)
    pos, col, lab = _frame(rng, 10)
    with pytest.raises(ValueError):
        store.fuse(pos * np.nan, col, lab, rng)
    with pytest.raises(ValueError):
        store.fuse(pos, col + 5.0, lab, rng)        # colors outside [0, 1]
    with pytest.raises(ValueError):
        store.fuse(pos, col, lab + 100, rng)        # labels outside the vocab
    with pytest.raises(ValueError):
        store.fuse(pos[:5], col, lab, rng)          # length mismatch


def test_memory_constructor_validation():
    with pytest.raises(ConfigError):
        SpatialMemory(4, 16, VOCAB, strategy="importance")
    with pytest.raises(ConfigError):
        SpatialMemory(4, 16, ())
    with pytest.raises(ConfigError):
        SpatialMemory(4, 16, ("chair", "chair"))


# ---------------------------------------------------------------------------
# container serialization


def _filled_snapshot(seed=11):
    rng = np.random.default_rng(seed)
    store = SpatialMemory(4, 48, VOCAB)
    for _ in range(6):
        store.fuse(*_frame(rng, 100), rng)
    return store.snapshot()


def test_bytes_roundtrip_exact():
    snap = _filled_snapshot()
    back = from_bytes(to_bytes(snap))
    assert back.vocab == snap.vocab
    assert back.t == snap.t
    assert back.fused_frames == snap.fused_frames
    assert back.capacity_frames == snap.capacity_frames
    assert back.frame_budget == snap.frame_budget
    np.testing.assert_array_equal(back.positions, snap.positions)
    np.testing.assert_array_equal(back.colors, snap.colors)
    np.testing.assert_array_equal(back.labels, snap.labels)
    np.testing.assert_array_equal(back.origins, snap.origins)


def test_container_file_roundtrip(tmp_path):
    snap = _filled_snapshot()
    path = tmp_path / "memory.smem"
    write_container(snap, path)
    back = read_container(path)
    np.testing.assert_array_equal(back.positions, snap.positions)
    assert back.vocab == snap.vocab


def test_corrupted_container_rejected():
    blob = bytearray(to_bytes(_filled_snapshot()))
    blob[:4] = b"NOPE"
    with pytest.raises(DatasetError):
        from_bytes(bytes(blob))
    with pytest.raises(DatasetError):
        from_bytes(to_bytes(_filled_snapshot())[:-7])  # truncated


def test_ply_export_header_and_count(tmp_path):
    snap = _filled_snapshot()
    path = tmp_path / "memory.ply"
    write_ply(snap, path)
    raw = path.read_bytes()
    header, _, body = raw.partition(b"end_header\n")
    lines = header.decode().splitlines()
    assert lines[0] == "ply"
    assert "format binary_little_endian 1.0" in lines
    assert f"element vertex {snap.size}" in lines
    vertex_bytes = 3 * 4 + 3 * 1 + 2  # float xyz, uchar rgb, ushort label
    assert len(body) == snap.size * vertex_bytes
