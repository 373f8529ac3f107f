"""Voxel pooling and per-patch feature assembly.

Points are binned by floor(position / cell_size) on all three axes.
Patches are keyed by their integer voxel coordinates and always returned
sorted lexicographically by (x, y, z), so pooling is deterministic and two
patch streams over the same snapshot align index for index.

Three feature flavours:

- point_patch_features: concat(mean color, centroid offset from the voxel
  center), zero-padded to the embedding width
- semantic_patches: per-point label embeddings from an EmbeddingTable,
  mean-pooled per voxel
- fuse_features: point patches + projection @ semantic patches, after
  checking both streams cover the identical voxel set
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, ConfigError, UnknownLabelError
from .memory import MemorySnapshot


@dataclass(frozen=True, eq=False)
class FeaturePatch:
    voxel: tuple[int, int, int]
    count: int
    centroid: tuple[float, float, float]
    feature: np.ndarray

    def __post_init__(self):
        feat = np.asarray(self.feature, dtype=np.float64).reshape(-1)
        feat.flags.writeable = False
        object.__setattr__(self, "voxel", tuple(int(v) for v in self.voxel))
        object.__setattr__(self, "count", int(self.count))
        object.__setattr__(self, "centroid",
                           tuple(float(v) for v in self.centroid))
        object.__setattr__(self, "feature", feat)


def _pool(positions: np.ndarray, features: np.ndarray, cell_size: float
          ) -> list[FeaturePatch]:
    voxels = np.floor(positions / cell_size).astype(np.int64)
    uniq, inverse = np.unique(voxels, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    k = uniq.shape[0]
    counts = np.bincount(inverse, minlength=k).astype(np.float64)
    sums = np.zeros((k, features.shape[1]))
    np.add.at(sums, inverse, features)
    cents = np.zeros((k, 3))
    np.add.at(cents, inverse, positions)
    means = sums / counts[:, None]
    cents = cents / counts[:, None]
    return [
        FeaturePatch(voxel=tuple(uniq[i]), count=int(counts[i]),
                     centroid=tuple(cents[i]), feature=means[i])
        for i in range(k)
    ]


def voxel_pool(positions, features, cell_size: float,
               min_count: int = 1) -> list[FeaturePatch]:
    """Mean-pool per-point features into voxel patches.

    positions (n, 3), features (n, D); empty input yields an empty list.
    Patch order is lexicographic in voxel coordinates.  Patches with fewer
    than ``min_count`` member points are dropped (the default keeps all).
    """
    if not (np.isscalar(cell_size) and float(cell_size) > 0):
        raise ConfigError(f"cell_size must be a positive number, got {cell_size!r}")
    min_count = int(min_count)
    if min_count < 1:
        raise ConfigError(f"min_count must be >= 1, got {min_count}")
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] != positions.shape[0]:
        raise ValueError(
            f"features must be (n, D) with n = {positions.shape[0]}, "
            f"got {features.shape}"
        )
    if positions.shape[0] == 0:
        return []
    if not np.isfinite(positions).all() or not np.isfinite(features).all():
        raise ValueError("positions and features must be finite")
    patches = _pool(positions, features, float(cell_size))
    if min_count > 1:
        patches = [p for p in patches if p.count >= min_count]
    return patches


class EmbeddingTable:
    """Label -> fixed-width embedding vector map.

    Text file format: first line is the dimension D, then one line per
    label: "<label> <v1> ... <vD>" with %.17g floats (lossless round trip).
    """

    def __init__(self, dim: int, vectors: dict[str, np.ndarray]):
        dim = int(dim)
        if dim < 1:
            raise ConfigError("embedding dimension must be >= 1")
        self.dim = dim
        self.vectors: dict[str, np.ndarray] = {}
        for label, vec in vectors.items():
            arr = np.asarray(vec, dtype=np.float64).reshape(-1)
            if arr.shape[0] != dim:
                raise ConfigError(
                    f"embedding for {label!r} has dim {arr.shape[0]}, expected {dim}"
                )
            if not np.isfinite(arr).all():
                raise ConfigError(f"embedding for {label!r} has non-finite entries")
            arr.flags.writeable = False
            self.vectors[str(label)] = arr

    def lookup(self, label: str) -> np.ndarray:
        try:
            return self.vectors[label]
        except KeyError:
            raise UnknownLabelError(label) from None

    @classmethod
    def deterministic(cls, labels, dim: int = 16, seed: int = 0) -> "EmbeddingTable":
        """Reproducible unit-scale embeddings keyed on (seed, label) only."""
        vectors = {}
        for label in labels:
            key = zlib.crc32(str(label).encode("utf-8"))
            rng = np.random.default_rng((int(seed), key))
            vectors[str(label)] = rng.standard_normal(dim) / np.sqrt(dim)
        return cls(dim, vectors)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{self.dim}\n")
            for label in sorted(self.vectors):
                vals = " ".join(format(v, ".17g") for v in self.vectors[label])
                fh.write(f"{label} {vals}\n")

    @classmethod
    def load(cls, path) -> "EmbeddingTable":
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
        if not lines:
            raise ConfigError("embedding table file is empty")
        try:
            dim = int(lines[0])
        except ValueError:
            raise ConfigError(
                f"first line must be the dimension, got {lines[0]!r}") from None
        vectors = {}
        for ln in lines[1:]:
            parts = ln.split()
            if len(parts) != dim + 1:
                raise ConfigError(
                    f"embedding line has {len(parts) - 1} values, expected {dim}: "
                    f"{ln[:60]!r}"
                )
            vectors[parts[0]] = np.array([float(v) for v in parts[1:]])
        return cls(dim, vectors)


def semantic_patches(snapshot: MemorySnapshot, table: EmbeddingTable,
                     cell_size: float) -> list[FeaturePatch]:
    """Pool label embeddings per voxel over a memory snapshot."""
    matrix = np.empty((len(snapshot.vocab), table.dim))
    for i, name in enumerate(snapshot.vocab):
        matrix[i] = table.lookup(name)
    feats = matrix[snapshot.labels.astype(np.int64)] if snapshot.size else \
        np.empty((0, table.dim))
    return voxel_pool(snapshot.positions, feats, cell_size)


def point_patch_features(snapshot: MemorySnapshot, cell_size: float,
                         dim: int = 16) -> list[FeaturePatch]:
    """Geometric patch features: concat(mean color, centroid - voxel center).

    The 6 base channels are zero-padded to ``dim`` (which must be >= 6) so
    they can be fused with same-width semantic patches.
    """
    dim = int(dim)
    if dim < 6:
        raise ConfigError(f"feature dim must be >= 6 to hold color+offset, got {dim}")
    if not (np.isscalar(cell_size) and float(cell_size) > 0):
        raise ConfigError(f"cell_size must be a positive number, got {cell_size!r}")
    cell = float(cell_size)
    base = voxel_pool(snapshot.positions,
                      snapshot.colors if snapshot.size else np.empty((0, 3)),
                      cell)
    out = []
    for patch in base:
        center = (np.asarray(patch.voxel, dtype=np.float64) + 0.5) * cell
        feat = np.zeros(dim)
        feat[0:3] = patch.feature
        feat[3:6] = np.asarray(patch.centroid) - center
        out.append(FeaturePatch(patch.voxel, patch.count, patch.centroid, feat))
    return out


def fuse_features(point_patches: list[FeaturePatch],
                  sem_patches: list[FeaturePatch],
                  projection: np.ndarray) -> list[FeaturePatch]:
    """Combine aligned patch streams: point + projection @ semantic.

    Raises AlignmentError when the two streams cover different voxel sets.
    The projection must be a finite square (D, D) matrix matching the
    feature width of both streams.
    """
    pv = {p.voxel: p for p in point_patches}
    sv = {p.voxel: p for p in sem_patches}
    if set(pv) != set(sv):
        only_p = sorted(set(pv) - set(sv))[:8]
        only_s = sorted(set(sv) - set(pv))[:8]
        raise AlignmentError(
            f"patch streams cover different voxels; point-only {only_p}, "
            f"semantic-only {only_s}"
        )
    proj = np.asarray(projection, dtype=np.float64)
    if proj.ndim != 2 or proj.shape[0] != proj.shape[1]:
        raise ConfigError(f"projection must be square, got shape {proj.shape}")
    if not np.isfinite(proj).all():
        raise ConfigError("projection must be finite")
    out = []
    for voxel in sorted(pv):
        p, s = pv[voxel], sv[voxel]
        if p.feature.shape[0] != proj.shape[0] or s.feature.shape[0] != proj.shape[1]:
            raise ConfigError(
                f"feature dims {p.feature.shape[0]}/{s.feature.shape[0]} do not "
                f"match projection {proj.shape}"
            )
        out.append(FeaturePatch(voxel, p.count, p.centroid,
                                p.feature + proj @ s.feature))
    return out


def patches_to_json(patches: list[FeaturePatch]) -> str:
    """JSON dump of a patch list for inspection."""
    return json.dumps([
        {"voxel": list(p.voxel), "count": p.count,
         "centroid": list(p.centroid), "feature": p.feature.tolist()}
        for p in patches
    ], indent=2)
