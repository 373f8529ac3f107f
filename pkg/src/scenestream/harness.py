"""Dataset ingestion, streaming replay, detector adapters, and reporting.

DATASET LAYOUT
    A dataset is a directory holding ``manifest.json`` plus the files it
    references (paths are relative to the manifest). The manifest is
    validated against the shipped JSON schema (``schemas/manifest.schema.json``)
    and carries camera intrinsics, a label vocabulary (index 0 is the
    non-object background surface, by convention "floor"), per-frame depth
    and semantic map files with camera poses, and object annotations given
    in the ground-aligned frame of the first camera (z up, origin at the
    initial camera position).

GRID FILES
    Depth and semantic maps are stored as raw little-endian grids with a
    14-byte header: magic ``SGRD``, version byte, dtype code byte
    (0 = float32, 1 = uint16), then uint32 height and width, followed by
    the row-major payload. Depth is metric; 0 marks invalid pixels.

DETECTOR WIRE PROTOCOL (version 1)
    A detector subprocess speaks length-prefixed frames over stdio; every
    length is a little-endian uint32 counting the bytes that follow.

    1. On startup the detector sends one frame containing a JSON object
       ``{"protocol": 1, "name": <string>}``.
    2. Per timestep the harness sends one request frame whose payload is:
       uint32 byte length of the category block, the category block
       (newline-joined UTF-8 labels), then the serialized memory container
       (see ``memory.to_bytes``).
    3. The detector answers with one frame of UTF-8 scene-description text.
    4. The harness closes the detector's stdin when done; the detector
       exits on EOF.

    One request per timestep; the default per-reply deadline is 60 s.
    Violations raise ProtocolError carrying a per-frame transcript.
"""

from __future__ import annotations

import io
import json
import logging
import math
import os
import shlex
import struct
import subprocess
import sys
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Protocol

import jsonschema
import numpy as np

from . import memory as memory_mod
from .errors import (ConfigError, DatasetError, EvalError, ProtocolError,
                     SceneStreamError)
from .geometry import (CameraIntrinsics, OrientedBox3, RigidTransform,
                       camera_pose, ground_align_transform, unproject_depth)
from .matching import merge_detections
from .memory import MemorySnapshot, SpatialMemory
from .metrics import (EvalReport, VisibilityRecord, build_gt_sets,
                      evaluate_report, object_visibility)
from .scene_format import (CANONICAL_CATEGORIES, ParseDiagnostic,
                           SceneDescription, description_from_boxes,
                           parse_scene_description, serialize, to_boxes)

log = logging.getLogger(__name__)

WORKERS_ENV = "SCENESTREAM_WORKERS"

# ---------------------------------------------------------------------------
# grid files


_GRID_MAGIC = b"SGRD"
_GRID_VERSION = 1
_GRID_HEADER = struct.Struct("<4sBBII")  # magic, version, dtype code, H, W
_GRID_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<u2")}
_GRID_CODES = {np.dtype("<f4"): 0, np.dtype("<u2"): 1}


def write_grid(path, array: np.ndarray) -> None:
    """Write a 2-d float32 or uint16 array as a raw little-endian grid."""
    arr = np.asarray(array)
    if arr.ndim != 2:
        raise DatasetError(f"grids are 2-d, got shape {arr.shape}")
    dtype = np.dtype(arr.dtype).newbyteorder("<")
    code = _GRID_CODES.get(dtype)
    if code is None:
        raise DatasetError(f"unsupported grid dtype {arr.dtype}; "
                           "use float32 or uint16")
    header = _GRID_HEADER.pack(_GRID_MAGIC, _GRID_VERSION, code,
                               arr.shape[0], arr.shape[1])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def read_grid(path) -> np.ndarray:
    """Read a grid file written by write_grid; validates header and size."""
    blob = Path(path).read_bytes()
    if len(blob) < _GRID_HEADER.size:
        raise DatasetError(f"{path}: truncated grid header")
    magic, version, code, height, width = _GRID_HEADER.unpack_from(blob)
    if magic != _GRID_MAGIC:
        raise DatasetError(f"{path}: bad magic {magic!r}")
    if version != _GRID_VERSION:
        raise DatasetError(f"{path}: unsupported grid version {version}")
    dtype = _GRID_DTYPES.get(code)
    if dtype is None:
        raise DatasetError(f"{path}: unknown dtype code {code}")
    expected = _GRID_HEADER.size + height * width * dtype.itemsize
    if len(blob) != expected:
        raise DatasetError(f"{path}: payload is {len(blob)} bytes, "
                           f"expected {expected}")
    data = np.frombuffer(blob, dtype=dtype, offset=_GRID_HEADER.size)
    return data.reshape(height, width).copy()


# ---------------------------------------------------------------------------
# manifest / dataset


def _load_schema(name: str) -> dict:
    text = (resources.files("scenestream") / "schemas" / name).read_text()
    return json.loads(text)


@dataclass(frozen=True)
class FrameInfo:
    """One stream entry: map files plus the camera-to-world pose params."""

    index: int
    timestamp: float
    depth_path: Path
    semantic_path: Path
    position: tuple[float, float, float]
    yaw: float
    pitch: float
    roll: float

    def pose(self) -> RigidTransform:
        return camera_pose(self.position, self.yaw, self.pitch, self.roll)


@dataclass(frozen=True)
class SceneDataset:
    """Validated, lazily-loadable scene stream.

    Annotations are oriented boxes in the ground-aligned frame of the
    first camera; ``annotation_ids`` runs parallel to ``annotations``.
    """

    root: Path
    scene_id: str
    intrinsics: CameraIntrinsics
    vocabulary: tuple[str, ...]
    frames: tuple[FrameInfo, ...]
    annotation_ids: tuple[str, ...]
    annotations: tuple[OrientedBox3, ...]
    scene_description_path: Path | None
    label_flip_prob: float

    @property
    def initial_pitch(self) -> float:
        return self.frames[0].pitch

    @property
    def initial_roll(self) -> float:
        return self.frames[0].roll

    @property
    def categories(self) -> tuple[str, ...]:
        """Vocabulary minus the background surface label."""
        return tuple(v for v in self.vocabulary if v != "floor")

    def load_frame(self, frame: FrameInfo) -> tuple[np.ndarray, np.ndarray]:
        """Read (depth float32, semantic uint16) maps for one frame."""
        depth = read_grid(frame.depth_path)
        sem = read_grid(frame.semantic_path)
        if depth.dtype != np.float32:
            raise DatasetError(f"{frame.depth_path}: depth must be float32")
        if sem.dtype != np.uint16:
            raise DatasetError(f"{frame.semantic_path}: semantic map must be uint16")
        if depth.shape != sem.shape:
            raise DatasetError(
                f"frame {frame.index}: depth {depth.shape} and semantic "
                f"{sem.shape} shapes differ")
        expected = (self.intrinsics.height, self.intrinsics.width)
        if depth.shape != expected:
            raise DatasetError(
                f"frame {frame.index}: maps are {depth.shape}, intrinsics "
                f"say {expected}")
        return depth, sem


def load_dataset(path) -> SceneDataset:
    """Load and validate a dataset directory (or manifest file path).

    Raises DatasetError on schema violations (with a JSON-pointer path to
    the offending field), on non-increasing timestamps, and on referenced
    files that do not exist (all missing files are listed).
    """
    path = Path(path)
    manifest_path = path / "manifest.json" if path.is_dir() else path
    if not manifest_path.is_file():
        raise DatasetError(f"no manifest at {manifest_path}")
    root = manifest_path.parent
    try:
        doc = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{manifest_path}: invalid JSON: {exc}") from exc
    try:
        jsonschema.validate(doc, _load_schema("manifest.schema.json"))
    except jsonschema.ValidationError as exc:
        pointer = "/" + "/".join(str(p) for p in exc.absolute_path)
        raise DatasetError(
            f"{manifest_path}: schema violation at {pointer}: {exc.message}"
        ) from exc

    kk = doc["intrinsics"]
    intrinsics = CameraIntrinsics(fx=kk["fx"], fy=kk["fy"], cx=kk["cx"],
                                  cy=kk["cy"], width=kk["width"],
                                  height=kk["height"])
    vocabulary = tuple(doc["vocabulary"])

    frames = []
    for entry in doc["frames"]:
        pose = entry["pose"]
        frames.append(FrameInfo(
            index=entry["index"],
            timestamp=float(entry["timestamp"]),
            depth_path=root / entry["depth"],
            semantic_path=root / entry["semantic"],
            position=tuple(float(v) for v in pose["position"]),
            yaw=float(pose["yaw"]),
            pitch=float(pose["pitch"]),
            roll=float(pose["roll"]),
        ))
    for prev, cur in zip(frames, frames[1:]):
        if cur.timestamp <= prev.timestamp:
            raise DatasetError(
                f"frame timestamps must be strictly increasing; frame "
                f"{cur.index} has {cur.timestamp} after {prev.timestamp}")

    ann_ids, anns = [], []
    for entry in doc["annotations"]:
        ann_ids.append(entry["id"])
        anns.append(OrientedBox3(label=entry["label"],
                                 center=tuple(entry["center"]),
                                 dims=tuple(entry["dims"]),
                                 yaw=entry["yaw"]))
    if len(set(ann_ids)) != len(ann_ids):
        raise DatasetError("duplicate annotation ids in manifest")

    desc_path = None
    if "scene_description" in doc:
        desc_path = root / doc["scene_description"]

    missing = []
    for frame in frames:
        for p in (frame.depth_path, frame.semantic_path):
            if not p.is_file():
                missing.append(str(p))
    if desc_path is not None and not desc_path.is_file():
        missing.append(str(desc_path))
    if missing:
        raise DatasetError(
            f"{len(missing)} referenced file(s) missing: " + ", ".join(missing))

    return SceneDataset(
        root=root,
        scene_id=doc["scene_id"],
        intrinsics=intrinsics,
        vocabulary=vocabulary,
        frames=tuple(frames),
        annotation_ids=tuple(ann_ids),
        annotations=tuple(anns),
        scene_description_path=desc_path,
        label_flip_prob=float(doc.get("label_flip_prob", 0.0)),
    )


def label_palette(vocabulary: tuple[str, ...]) -> np.ndarray:
    """Deterministic (V, 3) float32 color table in [0, 1] for point clouds.

    Index 0 (the background surface) is neutral gray; object labels get
    golden-angle-spaced hues so nearby indices stay distinguishable.
    """
    import colorsys

    out = np.empty((len(vocabulary), 3), dtype=np.float32)
    for i in range(len(vocabulary)):
        if i == 0:
            out[i] = (0.5, 0.5, 0.5)
        else:
            hue = (i * 0.6180339887498949) % 1.0
            out[i] = colorsys.hsv_to_rgb(hue, 0.65, 0.9)
    return out


# ---------------------------------------------------------------------------
# replay configuration


MODE_MEMORY = "memory-pipeline"
MODE_MERGE = "merge-baseline"


@dataclass(frozen=True)
class ReplayConfig:
    """Knobs for one replay run; validated on construction.

    capacity_frames / frame_budget bound the spatial memory; frame_count
    and frame_stride pick the evaluated subsequence (random start, seeded);
    v_strict / v_lenient are the visibility thresholds for the two
    ground-truth sets.
    """

    capacity_frames: int = 8
    frame_budget: int = 1024
    cell_size: float = 0.32
    iou_threshold: float = 0.25
    v_strict: float = 0.4
    v_lenient: float = 0.1
    frame_count: int = 32
    frame_stride: int = 30
    mode: str = MODE_MEMORY
    seed: int = 0
    detector_timeout: float = 60.0
    visibility_samples: int = 8

    def __post_init__(self):
        if self.capacity_frames < 1:
            raise ConfigError("capacity_frames must be >= 1")
        if self.frame_budget < 1:
            raise ConfigError("frame_budget must be >= 1")
        if not (self.cell_size > 0):
            raise ConfigError("cell_size must be positive")
        if not (0.0 < self.iou_threshold < 1.0):
            raise ConfigError("iou_threshold must be in (0, 1)")
        if not (0.0 < self.v_lenient <= self.v_strict <= 1.0):
            raise ConfigError("need 0 < v_lenient <= v_strict <= 1")
        if not (1 <= self.frame_count <= 32):
            raise ConfigError("frame_count must be in [1, 32]")
        if self.frame_stride < 1:
            raise ConfigError("frame_stride must be >= 1")
        if self.mode not in (MODE_MEMORY, MODE_MERGE):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if not (self.detector_timeout > 0):
            raise ConfigError("detector_timeout must be positive")
        if self.visibility_samples < 1:
            raise ConfigError("visibility_samples must be >= 1")

    def to_dict(self) -> dict:
        return {
            "capacity_frames": self.capacity_frames,
            "frame_budget": self.frame_budget,
            "cell_size": self.cell_size,
            "iou_threshold": self.iou_threshold,
            "v_strict": self.v_strict,
            "v_lenient": self.v_lenient,
            "frame_count": self.frame_count,
            "frame_stride": self.frame_stride,
            "mode": self.mode,
            "seed": self.seed,
            "detector_timeout": self.detector_timeout,
            "visibility_samples": self.visibility_samples,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ReplayConfig":
        if not isinstance(doc, dict):
            raise ConfigError(f"config must be a JSON object, got {type(doc).__name__}")
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)


def load_replay_config(path) -> ReplayConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return ReplayConfig.from_dict(doc)


def sample_frames(frames, count: int, stride: int, seed: int) -> list:
    """Pick a random-start, fixed-stride subsequence of the stream.

    The start is drawn so a full count fits whenever the stream allows it;
    shorter streams yield a truncated pick with a warning. Deterministic
    under the seed.
    """
    frames = list(frames)
    if not frames:
        raise DatasetError("cannot sample from an empty frame list")
    if count < 1:
        raise ConfigError("count must be >= 1")
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    rng = np.random.default_rng(seed)
    span = (count - 1) * stride + 1
    start = int(rng.integers(0, max(1, len(frames) - span + 1)))
    picked = [frames[i] for i in range(start, len(frames), stride)][:count]
    if len(picked) < count:
        log.warning("stream of %d frames truncates the requested %d-frame "
                    "sample (stride %d, start %d) to %d",
                    len(frames), count, stride, start, len(picked))
    return picked


# ---------------------------------------------------------------------------
# detector adapters


PROTOCOL_VERSION = 1
_MAX_FRAME_BYTES = 256 * 1024 * 1024


class Detector(Protocol):
    """Anything that maps a memory snapshot to scene-description text."""

    def detect(self, snapshot: MemorySnapshot,
               categories: tuple[str, ...]) -> str: ...


class ConstantDetector:
    """Returns the same scene-description text at every timestep.

    ConstantDetector("") is the empty detector; pass serialized ground
    truth to get an echo detector for upper-bound runs.
    """

    def __init__(self, text: str):
        self.text = text

    def detect(self, snapshot: MemorySnapshot,
               categories: tuple[str, ...]) -> str:
        return self.text

    def close(self) -> None:
        pass


def encode_detector_request(snapshot: MemorySnapshot,
                            categories: tuple[str, ...]) -> bytes:
    """Request payload: category block length, categories, memory container."""
    for cat in categories:
        if "\n" in cat:
            raise ProtocolError(f"category {cat!r} contains a newline")
    cat_blob = "\n".join(categories).encode("utf-8")
    return struct.pack("<I", len(cat_blob)) + cat_blob + memory_mod.to_bytes(snapshot)


def decode_detector_request(payload: bytes
                            ) -> tuple[MemorySnapshot, tuple[str, ...]]:
    if len(payload) < 4:
        raise ProtocolError("request shorter than its own header")
    (cat_len,) = struct.unpack_from("<I", payload)
    if 4 + cat_len > len(payload):
        raise ProtocolError("request category block overruns the payload")
    cat_blob = payload[4:4 + cat_len]
    categories = tuple(cat_blob.decode("utf-8").split("\n")) if cat_blob else ()
    snapshot = memory_mod.from_bytes(payload[4 + cat_len:])
    return snapshot, categories


def _write_frame(stream, payload: bytes) -> None:
    stream.write(struct.pack("<I", len(payload)))
    stream.write(payload)
    stream.flush()


def _read_exact(stream, n: int) -> bytes | None:
    """Read exactly n bytes from a blocking stream; None on clean EOF."""
    chunks = []
    got = 0
    while got < n:
        chunk = stream.read(n - got)
        if not chunk:
            if got == 0:
                return None
            raise ProtocolError(f"stream ended mid-frame ({got}/{n} bytes)")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def serve_detector_stdio(detect_fn: Callable[[MemorySnapshot, tuple[str, ...]], str],
                         name: str = "detector",
                         stdin=None, stdout=None) -> None:
    """Run the detector side of the wire protocol over stdio.

    detect_fn(snapshot, categories) -> scene-description text. Returns
    when the peer closes the input stream.
    """
    stdin = stdin if stdin is not None else sys.stdin.buffer
    stdout = stdout if stdout is not None else sys.stdout.buffer
    _write_frame(stdout, json.dumps(
        {"protocol": PROTOCOL_VERSION, "name": name}).encode("utf-8"))
    while True:
        header = _read_exact(stdin, 4)
        if header is None:
            return
        (length,) = struct.unpack("<I", header)
        payload = _read_exact(stdin, length)
        if payload is None and length > 0:
            raise ProtocolError("request frame truncated")
        snapshot, categories = decode_detector_request(payload or b"")
        text = detect_fn(snapshot, categories)
        _write_frame(stdout, text.encode("utf-8"))


class SubprocessDetector:
    """Adapter speaking the wire protocol to an external command.

    The command starts immediately; the handshake is validated before the
    first request. Every exchange is deadline-bounded; on timeout, garbage
    framing, or early exit, ProtocolError carries a per-frame transcript
    plus the child's captured stderr tail.
    """

    def __init__(self, command, timeout: float = 60.0, cwd=None):
        if isinstance(command, str):
            command = shlex.split(command)
        self.command = list(command)
        self.timeout = float(timeout)
        self.transcript: list[str] = []
        self._stderr_path = None
        try:
            import tempfile
            self._stderr_file = tempfile.TemporaryFile()
            self.proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=self._stderr_file, cwd=cwd)
        except OSError as exc:
            raise ProtocolError(
                f"cannot start detector {self.command}: {exc}",
                transcript=tuple(self.transcript)) from exc
        self._log(f"started: {' '.join(self.command)}")
        handshake = self._read_frame(deadline=time.monotonic() + self.timeout)
        try:
            doc = json.loads(handshake.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            self._fail(f"handshake is not JSON: {exc}")
        if not isinstance(doc, dict) or doc.get("protocol") != PROTOCOL_VERSION:
            self._fail(f"unsupported handshake {doc!r}; "
                       f"expected protocol {PROTOCOL_VERSION}")
        self.name = str(doc.get("name", "detector"))
        self._log(f"handshake ok: {self.name}")

    def _log(self, event: str) -> None:
        self.transcript.append(event)

    def _stderr_tail(self) -> str:
        try:
            self._stderr_file.seek(0, io.SEEK_END)
            size = self._stderr_file.tell()
            self._stderr_file.seek(max(0, size - 4096))
            return self._stderr_file.read().decode("utf-8", "replace")
        except (OSError, ValueError):
            return ""

    def _fail(self, message: str):
        self._log(f"error: {message}")
        tail = self._stderr_tail()
        if tail.strip():
            self._log("stderr tail: " + tail.strip())
        self.close()
        raise ProtocolError(f"detector {self.command[0]}: {message}",
                            transcript=tuple(self.transcript))

    def _wait_io(self, fileobj, event: int, deadline: float, what: str):
        import selectors
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            self._fail(f"timed out waiting to {what}")
        sel = selectors.DefaultSelector()
        sel.register(fileobj, event)
        try:
            ready = sel.select(remaining)
        finally:
            sel.close()
        if not ready:
            self._fail(f"timed out waiting to {what} "
                       f"(deadline {self.timeout:.1f}s)")

    def _write_all(self, payload: bytes, deadline: float) -> None:
        import selectors
        stdin = self.proc.stdin
        os.set_blocking(stdin.fileno(), False)
        view = memoryview(payload)
        sent = 0
        try:
            while sent < len(view):
                self._wait_io(stdin, selectors.EVENT_WRITE, deadline, "write")
                try:
                    sent += os.write(stdin.fileno(), view[sent:sent + 65536])
                except BlockingIOError:
                    continue
                except (BrokenPipeError, OSError) as exc:
                    self._fail(f"write failed: {exc}")
        finally:
            os.set_blocking(stdin.fileno(), True)

    def _read_frame(self, deadline: float) -> bytes:
        import selectors
        stdout = self.proc.stdout
        os.set_blocking(stdout.fileno(), False)
        buf = bytearray()
        need = 4
        length = None
        try:
            while True:
                self._wait_io(stdout, selectors.EVENT_READ, deadline, "read")
                try:
                    chunk = os.read(stdout.fileno(), 65536)
                except BlockingIOError:
                    continue
                if chunk == b"":
                    self._fail(f"detector closed its output mid-frame "
                               f"(exit code {self.proc.poll()})")
                buf.extend(chunk)
                if length is None and len(buf) >= 4:
                    (length,) = struct.unpack_from("<I", buf)
                    if length > _MAX_FRAME_BYTES:
                        self._fail(f"frame length {length} exceeds the "
                                   f"{_MAX_FRAME_BYTES}-byte cap")
                    need = 4 + length
                if length is not None and len(buf) >= need:
                    return bytes(buf[4:need])
        finally:
            os.set_blocking(stdout.fileno(), True)

    def detect(self, snapshot: MemorySnapshot,
               categories: tuple[str, ...]) -> str:
        payload = encode_detector_request(snapshot, categories)
        deadline = time.monotonic() + self.timeout
        self._write_all(struct.pack("<I", len(payload)) + payload, deadline)
        self._log(f"t={snapshot.t} sent {len(payload)} bytes "
                  f"({snapshot.size} points)")
        started = time.monotonic()
        reply = self._read_frame(deadline)
        self._log(f"t={snapshot.t} received {len(reply)} bytes "
                  f"in {time.monotonic() - started:.2f}s")
        try:
            return reply.decode("utf-8")
        except UnicodeDecodeError as exc:
            self._fail(f"reply is not UTF-8: {exc}")

    def close(self) -> None:
        proc = getattr(self, "proc", None)
        if proc is None:
            return
        try:
            if proc.stdin and not proc.stdin.closed:
                proc.stdin.close()
        except (BrokenPipeError, OSError):
            pass
        try:
            proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()


def make_detector(spec, config: "ReplayConfig"):
    """Build a detector from a CLI-style spec.

    "oracle" (optionally "oracle:key=value,..." with keys cluster_eps,
    min_points, min_extent) runs the in-process geometric detector;
    anything else is a shell command speaking the wire protocol.
    """
    if spec == "oracle" or str(spec).startswith("oracle:"):
        from .simulator import OracleDetector
        kwargs = {}
        _, _, params = str(spec).partition(":")
        for item in filter(None, params.split(",")):
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(f"bad oracle parameter {item!r}")
            if key in ("cluster_eps", "min_extent"):
                kwargs[key] = float(value)
            elif key == "min_points":
                kwargs[key] = int(value)
            else:
                raise ConfigError(f"unknown oracle parameter {key!r}")
        return OracleDetector(**kwargs)
    return SubprocessDetector(spec, timeout=config.detector_timeout)


# ---------------------------------------------------------------------------
# replay loops


@dataclass(frozen=True)
class TimestepResult:
    """Outcome of one replay step: memory state, detections, evaluation."""

    t: int
    frame_index: int
    memory_size: int
    detections: SceneDescription
    report: EvalReport
    diagnostics: tuple[ParseDiagnostic, ...]

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "frame_index": self.frame_index,
            "memory_size": self.memory_size,
            "n_detections": len(self.detections.records),
            "n_parse_diagnostics": len(self.diagnostics),
            "eval": self.report.to_dict(),
        }


class _GroundTruthTracker:
    """Per-object running-max visibility feeding strict/lenient sets."""

    def __init__(self, dataset: SceneDataset, config: ReplayConfig):
        self.dataset = dataset
        self.config = config
        self.records = {obj_id: VisibilityRecord(obj_id)
                        for obj_id in dataset.annotation_ids}
        self._prev_strict: set[str] = set()
        self._prev_lenient: set[str] = set()

    def observe(self, cam_to_unified: RigidTransform,
                depth: np.ndarray) -> None:
        for obj_id, box in zip(self.dataset.annotation_ids,
                               self.dataset.annotations):
            frac = object_visibility(
                box, cam_to_unified, self.dataset.intrinsics, depth,
                samples_per_face=self.config.visibility_samples)
            self.records[obj_id].observe(frac)

    def gt_sets(self):
        vis = {obj_id: rec.running_max for obj_id, rec in self.records.items()}
        sets = build_gt_sets(
            zip(self.dataset.annotation_ids, self.dataset.annotations), vis,
            v_strict=self.config.v_strict, v_lenient=self.config.v_lenient)
        strict, lenient = set(sets.strict_ids), set(sets.lenient_ids)
        if not (strict >= self._prev_strict and lenient >= self._prev_lenient):
            raise EvalError("ground-truth sets shrank between timesteps")
        self._prev_strict, self._prev_lenient = strict, lenient
        return sets


def _unified_frame_transform(dataset: SceneDataset) -> RigidTransform:
    """World -> ground-aligned-at-first-camera transform."""
    first = dataset.frames[0]
    align = ground_align_transform(first.pitch, first.roll)
    return align.compose(first.pose().inverse())


def replay(dataset: SceneDataset, detector: Detector,
           config: ReplayConfig, *,
           pointmap_fn=None) -> list[TimestepResult]:
    """Run the streaming memory pipeline over a sampled frame subsequence.

    Per timestep: unproject the depth map (or call pointmap_fn(depth,
    intrinsics) -> (points, pixel_indices) when a reconstruction stand-in
    is plugged in), move points into the ground-aligned frame, fuse into
    the bounded memory, ask the detector for a scene description, parse it
    leniently, and score against the visibility-derived ground-truth sets
    at this timestep.
    """
    picked = sample_frames(dataset.frames, config.frame_count,
                           config.frame_stride, config.seed)
    world_to_unified = _unified_frame_transform(dataset)
    palette = label_palette(dataset.vocabulary)
    store = SpatialMemory(config.capacity_frames, config.frame_budget,
                          dataset.vocabulary)
    rng = np.random.default_rng(config.seed)
    tracker = _GroundTruthTracker(dataset, config)
    categories = dataset.categories

    results: list[TimestepResult] = []
    for t, frame in enumerate(picked, start=1):
        depth, sem = dataset.load_frame(frame)
        if pointmap_fn is not None:
            points_cam, pixel_indices = pointmap_fn(depth, dataset.intrinsics)
        else:
            points_cam, pixel_indices = unproject_depth(depth,
                                                        dataset.intrinsics)
        cam_to_unified = world_to_unified.compose(frame.pose())
        points = cam_to_unified.apply(points_cam)
        labels = sem.reshape(-1)[pixel_indices]
        store.fuse(points, palette[labels.astype(np.int64)], labels, rng)
        snapshot = store.snapshot()
        if snapshot.size != store.schedule.target_size(store.fused_frames):
            raise EvalError(
                f"memory size law violated at t={t}: {snapshot.size} != "
                f"{store.schedule.target_size(store.fused_frames)}")

        text = detector.detect(snapshot, categories)
        parsed = parse_scene_description(text)
        predictions, dropped = to_boxes(parsed.description, categories)
        if dropped:
            log.info("t=%d: dropped %d detection(s) with labels outside "
                     "the vocabulary", t, dropped)

        tracker.observe(cam_to_unified, depth)
        report = evaluate_report(predictions, tracker.gt_sets(), categories,
                                 config.iou_threshold)
        results.append(TimestepResult(
            t=t, frame_index=frame.index, memory_size=snapshot.size,
            detections=parsed.description, report=report,
            diagnostics=parsed.diagnostics))
    return results


def run_merge_baseline(dataset: SceneDataset, detector: Detector,
                       config: ReplayConfig) -> list[TimestepResult]:
    """Per-frame detection + class-constrained merge, evaluated per step.

    The detector sees a single-frame point cloud each timestep (a
    capacity-1 memory, same frame budget); its detections are merged into
    the running set, replacing matches above the IoU threshold.
    """
    picked = sample_frames(dataset.frames, config.frame_count,
                           config.frame_stride, config.seed)
    world_to_unified = _unified_frame_transform(dataset)
    palette = label_palette(dataset.vocabulary)
    rng = np.random.default_rng(config.seed)
    tracker = _GroundTruthTracker(dataset, config)
    categories = dataset.categories

    merged: list[OrientedBox3] = []
    results: list[TimestepResult] = []
    for t, frame in enumerate(picked, start=1):
        depth, sem = dataset.load_frame(frame)
        points_cam, pixel_indices = unproject_depth(depth, dataset.intrinsics)
        cam_to_unified = world_to_unified.compose(frame.pose())
        points = cam_to_unified.apply(points_cam)
        labels = sem.reshape(-1)[pixel_indices]

        store = SpatialMemory(1, config.frame_budget, dataset.vocabulary)
        store.fuse(points, palette[labels.astype(np.int64)], labels, rng)
        snapshot = store.snapshot()

        text = detector.detect(snapshot, categories)
        parsed = parse_scene_description(text)
        incoming, _ = to_boxes(parsed.description, categories)
        merged = merge_detections(merged, incoming, config.iou_threshold)

        tracker.observe(cam_to_unified, depth)
        report = evaluate_report(merged, tracker.gt_sets(), categories,
                                 config.iou_threshold)
        results.append(TimestepResult(
            t=t, frame_index=frame.index, memory_size=snapshot.size,
            detections=description_from_boxes(merged), report=report,
            diagnostics=parsed.diagnostics))
    return results


def run_dataset(dataset: SceneDataset, detector: Detector,
                config: ReplayConfig) -> list[TimestepResult]:
    """Dispatch on config.mode."""
    if config.mode == MODE_MERGE:
        return run_merge_baseline(dataset, detector, config)
    return replay(dataset, detector, config)


def _replay_one_path(args) -> list[TimestepResult]:
    dataset_path, detector_spec, config = args
    dataset = load_dataset(dataset_path)
    detector = make_detector(detector_spec, config)
    try:
        return run_dataset(dataset, detector, config)
    finally:
        close = getattr(detector, "close", None)
        if close:
            close()


def replay_many(dataset_paths, detector_spec, config: ReplayConfig
                ) -> list[list[TimestepResult]]:
    """Replay several datasets, honoring the worker-count env var.

    detector_spec is a picklable spec for make_detector ("oracle" or a
    command string); each worker builds its own detector instance.
    """
    paths = list(dataset_paths)
    workers = int(os.environ.get(WORKERS_ENV, "1"))
    if workers < 1:
        raise ConfigError(f"{WORKERS_ENV} must be >= 1, got {workers}")
    jobs = [(p, detector_spec, config) for p in paths]
    if workers == 1 or len(paths) <= 1:
        return [_replay_one_path(job) for job in jobs]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_replay_one_path, jobs))


# ---------------------------------------------------------------------------
# reports


_CSV_CATEGORIES = CANONICAL_CATEGORIES


def report_document(results, config: ReplayConfig | None = None,
                    scene_id: str = "") -> dict:
    """Build the JSON report document (validated against the schema)."""
    timesteps = [r.to_dict() for r in results]
    doc = {
        "format": "scenestream-report",
        "version": 1,
        "scene_id": scene_id,
        "mode": config.mode if config else MODE_MEMORY,
        "config": config.to_dict() if config else None,
        "timesteps": timesteps,
        "final": timesteps[-1] if timesteps else None,
    }
    jsonschema.validate(doc, _load_schema("report.schema.json"))
    return doc


def emit_report(results, out_path, fmt: str | None = None,
                config: ReplayConfig | None = None,
                scene_id: str = "") -> Path:
    """Write per-timestep results as JSON or CSV; returns the path written.

    The format defaults to the file suffix. JSON output validates against
    the shipped report schema and is byte-stable for identical inputs;
    CSV holds one row per timestep (header only when there are none) with
    the macro average plus one fuzzy-F1 column per canonical category.
    """
    out_path = Path(out_path)
    if fmt is None:
        fmt = out_path.suffix.lstrip(".").lower() or "json"
    if fmt == "json":
        doc = report_document(results, config, scene_id)
        out_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return out_path
    if fmt == "csv":
        import csv
        columns = (["t", "frame_index", "memory_size", "n_detections",
                    "macro_fuzzy_f1", "macro_vanilla_f1"]
                   + [f"fuzzy_f1_{cat}" for cat in _CSV_CATEGORIES])
        with open(out_path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for res in results:
                rep = res.report
                scored = [rep.per_class[c].vanilla_f1
                          for c in rep.scored_categories]
                macro_vanilla = sum(scored) / len(scored) if scored else 0.0
                row = [res.t, res.frame_index, res.memory_size,
                       len(res.detections.records),
                       f"{rep.macro_fuzzy_f1:.6f}", f"{macro_vanilla:.6f}"]
                for cat in _CSV_CATEGORIES:
                    cls = rep.per_class.get(cat)
                    row.append("" if cls is None else f"{cls.fuzzy_f1:.6f}")
                writer.writerow(row)
        return out_path
    raise ConfigError(f"unknown report format {fmt!r}; use json or csv")
