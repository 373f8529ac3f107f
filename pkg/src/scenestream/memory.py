"""Bounded spatial memory over streaming labeled point clouds.

The memory holds at most capacity_frames * frame_budget points. Each
incoming frame is subsampled, concatenated onto the store, and the result
is subsampled again, with count-targeted draws so the size law

    |points at time t| = min(fused_frames, capacity_frames) * frame_budget

holds exactly. The two schedule ratios (incoming_sample_ratio applied to
the new frame, retain_ratio applied to the concatenation) are exposed as
exact rationals; in expectation every fused frame s <= capacity ends up
represented by frame_budget * capacity / t points at time t, i.e. the
memory stays temporally balanced while never growing.

Binary container layout (all little-endian):

    offset  size  field
    0       4     magic b"SMEM"
    4       2     version (uint16, = 1)
    6       2     vocab entry count (uint16)
    8       4     capacity_frames (uint32)
    12      4     frame_budget (uint32)
    16      4     t (uint32)
    20      4     fused_frames (uint32)
    24      4     point count n (uint32)
    28      ...   vocab entries: uint16 utf-8 byte length + bytes
    ...           positions float32 (n, 3), colors float32 (n, 3),
                  labels uint16 (n,), origins uint32 (n,)
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ConfigError, DatasetError

logger = logging.getLogger(__name__)

_MAGIC = b"SMEM"
_VERSION = 1


@dataclass(frozen=True)
class FusionSchedule:
    """Sampling ratios that keep the memory at its exact target size.

    capacity: number of frames the memory levels off at. budget: points
    kept per fused frame. Draw counts round half-up; ratios are exact
    Fractions so schedule identities can be tested with = rather than
    approx.
    """

    capacity: int
    budget: int

    def __post_init__(self):
        if int(self.capacity) < 1:
            raise ConfigError("capacity must be >= 1")
        if int(self.budget) < 1:
            raise ConfigError("frame budget must be >= 1")
        object.__setattr__(self, "capacity", int(self.capacity))
        object.__setattr__(self, "budget", int(self.budget))

    def incoming_sample_ratio(self, t: int) -> Fraction:
        """Fraction of the incoming frame drawn at fused-frame index t (1-based)."""
        if t < 1:
            raise ValueError("t must be >= 1")
        if t <= self.capacity:
            return Fraction(1)
        return Fraction(self.capacity, t - 1)

    def retain_ratio(self, t: int) -> Fraction:
        """Fraction of the concatenated store retained at fused-frame index t."""
        if t < 1:
            raise ValueError("t must be >= 1")
        if t <= self.capacity:
            return Fraction(1)
        return Fraction(t - 1, t)

    def target_size(self, t: int) -> int:
        return min(t, self.capacity) * self.budget

    def frame_draw(self, t: int) -> int:
        """Points drawn from the incoming frame: round(ratio * budget), half-up."""
        x = self.incoming_sample_ratio(t) * self.budget
        return int((x + Fraction(1, 2)).__floor__())


@dataclass(frozen=True)
class MemorySnapshot:
    """Immutable view of the memory state; arrays are read-only."""

    positions: np.ndarray   # (n, 3) float32
    colors: np.ndarray      # (n, 3) float32 in [0, 1]
    labels: np.ndarray      # (n,) uint16, index into vocab
    origins: np.ndarray     # (n,) uint32, 1-based timestep each point arrived
    t: int
    fused_frames: int
    capacity_frames: int
    frame_budget: int
    vocab: tuple[str, ...]

    @property
    def size(self) -> int:
        return int(self.positions.shape[0])


class SpatialMemory:
    """Fixed-capacity point store fed one frame at a time.

    One writer per instance; fuse() mutates in place. Pass vocab as the
    label vocabulary (labels are indices into it). Only the "uniform"
    sampling strategy is implemented.
    """

    def __init__(self, capacity_frames: int, frame_budget: int,
                 vocab: tuple[str, ...], strategy: str = "uniform"):
        if strategy != "uniform":
            raise ConfigError(f"unknown sampling strategy {strategy!r}")
        vocab = tuple(str(v) for v in vocab)
        if not vocab:
            raise ConfigError("vocab must not be empty")
        if len(set(vocab)) != len(vocab):
            raise ConfigError("vocab entries must be unique")
        if len(vocab) > 0xFFFF:
            raise ConfigError("vocab too large for uint16 labels")
        self.schedule = FusionSchedule(capacity_frames, frame_budget)
        self.vocab = vocab
        self.strategy = strategy
        self.t = 0              # timesteps seen, including skipped ones
        self.fused_frames = 0   # frames that actually contributed points
        self.skipped_frames = 0
        self.padded_frames = 0
        self._positions = np.empty((0, 3), dtype=np.float32)
        self._colors = np.empty((0, 3), dtype=np.float32)
        self._labels = np.empty(0, dtype=np.uint16)
        self._origins = np.empty(0, dtype=np.uint32)

    @property
    def capacity_frames(self) -> int:
        return self.schedule.capacity

    @property
    def frame_budget(self) -> int:
        return self.schedule.budget

    @property
    def size(self) -> int:
        return int(self._positions.shape[0])

    def fuse(self, positions, colors, labels, rng) -> None:
        """Fold one frame into the store.

        positions (n, 3) finite; colors (n, 3) in [0, 1]; labels (n,) ints
        indexing the vocab. rng is an int seed or numpy Generator. An empty
        frame advances t but is skipped (logged); the schedule runs on the
        fused-frame count so the size law stays exact. Frames smaller than
        the scheduled draw are padded by resampling with replacement
        (logged).
        """
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        positions = np.asarray(positions, dtype=np.float32).reshape(-1, 3)
        colors = np.asarray(colors, dtype=np.float32).reshape(-1, 3)
        labels = np.asarray(labels).reshape(-1)
        n = positions.shape[0]
        if colors.shape[0] != n or labels.shape[0] != n:
            raise ValueError(
                f"frame arrays disagree: {n} positions, {colors.shape[0]} colors, "
                f"{labels.shape[0]} labels"
            )
        self.t += 1
        if n == 0:
            self.skipped_frames += 1
            logger.info("t=%d: empty frame skipped", self.t)
            return
        if not np.isfinite(positions).all():
            raise ValueError("positions must be finite")
        if not np.isfinite(colors).all() or colors.min() < 0 or colors.max() > 1:
            raise ValueError("colors must lie in [0, 1]")
        if not np.issubdtype(labels.dtype, np.integer):
            raise ValueError("labels must be integers")
        if labels.min() < 0 or labels.max() >= len(self.vocab):
            raise ValueError("labels must index the vocab")
        labels = labels.astype(np.uint16)

        step = self.fused_frames + 1
        draw = self.schedule.frame_draw(step)
        if n >= draw:
            pick = rng.choice(n, size=draw, replace=False)
        else:
            pick = rng.choice(n, size=draw, replace=True)
            self.padded_frames += 1
            logger.info("t=%d: frame has %d points < draw %d, padded with "
                        "replacement", self.t, n, draw)
        pick.sort()

        origins = np.full(draw, self.t, dtype=np.uint32)
        self._positions = np.concatenate([self._positions, positions[pick]])
        self._colors = np.concatenate([self._colors, colors[pick]])
        self._labels = np.concatenate([self._labels, labels[pick]])
        self._origins = np.concatenate([self._origins, origins])

        target = self.schedule.target_size(step)
        total = self._positions.shape[0]
        if total > target:
            keep = rng.choice(total, size=target, replace=False)
            keep.sort()
            self._positions = self._positions[keep]
            self._colors = self._colors[keep]
            self._labels = self._labels[keep]
            self._origins = self._origins[keep]
        self.fused_frames = step

    def snapshot(self) -> MemorySnapshot:
        def ro(a):
            out = a.copy()
            out.flags.writeable = False
            return out

        return MemorySnapshot(
            positions=ro(self._positions),
            colors=ro(self._colors),
            labels=ro(self._labels),
            origins=ro(self._origins),
            t=self.t,
            fused_frames=self.fused_frames,
            capacity_frames=self.capacity_frames,
            frame_budget=self.frame_budget,
            vocab=self.vocab,
        )


def fuse(memory: SpatialMemory, positions, colors, labels, rng) -> SpatialMemory:
    """Functional wrapper around SpatialMemory.fuse; returns the memory."""
    memory.fuse(positions, colors, labels, rng)
    return memory


def to_bytes(snapshot: MemorySnapshot) -> bytes:
    """Serialize a snapshot to the binary container (see module doc)."""
    n = snapshot.size
    head = struct.pack("<4sHHIIIII", _MAGIC, _VERSION, len(snapshot.vocab),
                       snapshot.capacity_frames, snapshot.frame_budget,
                       snapshot.t, snapshot.fused_frames, n)
    parts = [head]
    for name in snapshot.vocab:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
    parts.append(np.ascontiguousarray(snapshot.positions, dtype="<f4").tobytes())
    parts.append(np.ascontiguousarray(snapshot.colors, dtype="<f4").tobytes())
    parts.append(np.ascontiguousarray(snapshot.labels, dtype="<u2").tobytes())
    parts.append(np.ascontiguousarray(snapshot.origins, dtype="<u4").tobytes())
    return b"".join(parts)


def from_bytes(blob: bytes) -> MemorySnapshot:
    """Parse the binary container; strict about magic, version, and length."""
    head_size = struct.calcsize("<4sHHIIIII")
    if len(blob) < head_size:
        raise DatasetError("container truncated (header)")
    magic, version, n_vocab, cap, budget, t, fused, n = struct.unpack_from(
        "<4sHHIIIII", blob)
    if magic != _MAGIC:
        raise DatasetError(f"bad container magic {magic!r}")
    if version != _VERSION:
        raise DatasetError(f"unsupported container version {version}")
    off = head_size
    vocab = []
    for _ in range(n_vocab):
        if off + 2 > len(blob):
            raise DatasetError("container truncated (vocab)")
        (ln,) = struct.unpack_from("<H", blob, off)
        off += 2
        if off + ln > len(blob):
            raise DatasetError("container truncated (vocab entry)")
        vocab.append(blob[off:off + ln].decode("utf-8"))
        off += ln

    def take(dtype, shape):
        nonlocal off
        count = int(np.prod(shape)) if shape else 0
        nbytes = np.dtype(dtype).itemsize * count
        if off + nbytes > len(blob):
            raise DatasetError("container truncated (arrays)")
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=off).reshape(shape)
        off += nbytes
        out = arr.copy()
        out.flags.writeable = False
        return out

    positions = take("<f4", (n, 3)).astype(np.float32, copy=False)
    colors = take("<f4", (n, 3)).astype(np.float32, copy=False)
    labels = take("<u2", (n,)).astype(np.uint16, copy=False)
    origins = take("<u4", (n,)).astype(np.uint32, copy=False)
    if off != len(blob):
        raise DatasetError(f"container has {len(blob) - off} trailing bytes")
    return MemorySnapshot(positions=positions, colors=colors, labels=labels,
                          origins=origins, t=int(t), fused_frames=int(fused),
                          capacity_frames=int(cap), frame_budget=int(budget),
                          vocab=tuple(vocab))


def write_container(snapshot: MemorySnapshot, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(snapshot))


def read_container(path) -> MemorySnapshot:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())


def write_ply(snapshot: MemorySnapshot, path) -> None:
    """Export the point store as binary little-endian PLY for inspection.

    Vertex properties: float x/y/z, uchar red/green/blue, ushort label.
    The vocab is recorded as header comments ("comment label <i> <name>").
    """
    n = snapshot.size
    header_lines = [
        "ply",
        "format binary_little_endian 1.0",
        f"comment t {snapshot.t} fused {snapshot.fused_frames}",
    ]
    header_lines += [f"comment label {i} {name}"
                     for i, name in enumerate(snapshot.vocab)]
    header_lines += [
        f"element vertex {n}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "property ushort label",
        "end_header",
    ]
    rec = np.empty(n, dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                             ("red", "u1"), ("green", "u1"), ("blue", "u1"),
                             ("label", "<u2")])
    rec["x"] = snapshot.positions[:, 0]
    rec["y"] = snapshot.positions[:, 1]
    rec["z"] = snapshot.positions[:, 2]
    rgb = np.clip(np.rint(snapshot.colors * 255.0), 0, 255).astype(np.uint8)
    rec["red"] = rgb[:, 0]
    rec["green"] = rgb[:, 1]
    rec["blue"] = rgb[:, 2]
    rec["label"] = snapshot.labels
    with open(path, "wb") as fh:
        fh.write(("\n".join(header_lines) + "\n").encode("ascii"))
        fh.write(rec.tobytes())
