"""Visibility tracking, dual ground-truth sets, and detection metrics.

Evaluation runs against two annotation sets derived from per-object
visibility: a strict set (objects seen well enough that a detector should
find them) and a lenient superset (objects seen at all). Recall is scored
on the strict set, precision on the lenient set, and their harmonic mean
is the fuzzy F1. A single matching pass against the lenient set provides
both counts; matched pairs whose reference belongs to the strict set count
toward recall.

Visibility of a box in a frame is the fraction of face samples (an s x s
grid on each of the 6 faces) that project into the image with positive
camera depth and pass the depth-map occlusion test (sample depth <= map
depth + tolerance). Because the map includes the object itself, back faces
self-occlude and an unoccluded box saturates near 0.5.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EvalError
from .geometry import CameraIntrinsics, OrientedBox3, RigidTransform
from .matching import match_boxes
from .scene_format import CANONICAL_CATEGORIES


def _face_samples(box: OrientedBox3, samples_per_face: int) -> np.ndarray:
    """(6*s*s, 3) world-frame sample points on the box faces."""
    s = samples_per_face
    frac = (np.arange(s, dtype=np.float64) + 0.5) / s - 0.5
    u, v = np.meshgrid(frac, frac, indexing="ij")
    u = u.ravel()
    v = v.ravel()
    half = np.full(s * s, 0.5)
    faces = []
    for axis in range(3):
        for sign in (-1.0, 1.0):
            pt = np.empty((s * s, 3))
            others = [a for a in range(3) if a != axis]
            pt[:, axis] = sign * half
            pt[:, others[0]] = u
            pt[:, others[1]] = v
            faces.append(pt)
    local = np.concatenate(faces) * np.asarray(box.dims)
    c, sn = math.cos(box.yaw), math.sin(box.yaw)
    rot = np.array([[c, -sn, 0.0], [sn, c, 0.0], [0.0, 0.0, 1.0]])
    return local @ rot.T + np.asarray(box.center)


def object_visibility(box: OrientedBox3, camera_pose: RigidTransform,
                      intrinsics: CameraIntrinsics,
                      depth: np.ndarray | None = None,
                      samples_per_face: int = 8,
                      depth_tolerance: float = 0.05) -> float:
    """Fraction of face samples visible from a camera.

    camera_pose maps camera coordinates to the box's frame. When ``depth``
    is given, samples are occlusion-tested against it at the nearest pixel;
    invalid map depths (0 or non-finite) carry no occluder evidence and
    leave the sample visible.
    """
    if samples_per_face < 1:
        raise ConfigError("samples_per_face must be >= 1")
    world = _face_samples(box, samples_per_face)
    cam = (world - camera_pose.translation) @ camera_pose.rotation
    z = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intrinsics.fx * cam[:, 0] / z + intrinsics.cx
        v = intrinsics.fy * cam[:, 1] / z + intrinsics.cy
    ui = np.rint(u)
    vi = np.rint(v)
    visible = ((z > 0) & (ui >= 0) & (ui < intrinsics.width)
               & (vi >= 0) & (vi < intrinsics.height))
    if depth is not None:
        d = np.asarray(depth)
        if d.shape != (intrinsics.height, intrinsics.width):
            raise EvalError(
                f"depth shape {d.shape} does not match intrinsics "
                f"({intrinsics.height}, {intrinsics.width})"
            )
        idx = np.nonzero(visible)[0]
        if idx.size:
            map_d = d[vi[idx].astype(np.int64), ui[idx].astype(np.int64)]
            map_d = map_d.astype(np.float64)
            has_surface = np.isfinite(map_d) & (map_d > 0)
            occluded = has_surface & (z[idx] > map_d + depth_tolerance)
            upd = visible[idx]
            upd[occluded] = False
            visible[idx] = upd
    return float(np.count_nonzero(visible)) / visible.shape[0]


@dataclass
class VisibilityRecord:
    """Per-object visibility history with a running maximum."""

    object_id: str
    history: list[float] = field(default_factory=list)
    running_max: float = 0.0

    def observe(self, fraction: float) -> float:
        f = float(fraction)
        if not (0.0 <= f <= 1.0):
            raise EvalError(f"visibility fraction {f} outside [0, 1]")
        self.history.append(f)
        if f > self.running_max:
            self.running_max = f
        return self.running_max


@dataclass(frozen=True)
class GroundTruthSets:
    """Strict/lenient annotation pair; strict ids are a subset of lenient."""

    strict_ids: tuple[str, ...]
    strict: tuple[OrientedBox3, ...]
    lenient_ids: tuple[str, ...]
    lenient: tuple[OrientedBox3, ...]

    def __post_init__(self):
        if len(self.strict_ids) != len(self.strict):
            raise EvalError("strict ids/boxes length mismatch")
        if len(self.lenient_ids) != len(self.lenient):
            raise EvalError("lenient ids/boxes length mismatch")
        if len(set(self.lenient_ids)) != len(self.lenient_ids):
            raise EvalError("duplicate lenient ids")
        missing = set(self.strict_ids) - set(self.lenient_ids)
        if missing:
            raise EvalError(f"strict set is not a subset of lenient: {sorted(missing)}")


def build_gt_sets(annotations, visibility, v_strict: float = 0.4,
                  v_lenient: float = 0.1, min_dimension: float = 0.15
                  ) -> GroundTruthSets:
    """Threshold running-max visibilities into strict/lenient sets.

    annotations: mapping id -> OrientedBox3 or iterable of (id, box).
    visibility: mapping id -> running-max fraction (missing ids count 0).
    Objects with every extent below min_dimension are excluded entirely.
    Requires 0 < v_lenient <= v_strict <= 1 so strict is a subset.
    """
    if not (0.0 < v_lenient <= v_strict <= 1.0):
        raise ConfigError(
            f"need 0 < v_lenient <= v_strict <= 1, got {v_lenient}, {v_strict}"
        )
    items = list(annotations.items()) if hasattr(annotations, "items") \
        else list(annotations)
    strict_ids, strict, lenient_ids, lenient = [], [], [], []
    for obj_id, box in items:
        if all(d < min_dimension for d in box.dims):
            continue
        vis = float(visibility.get(obj_id, 0.0))
        if vis >= v_lenient:
            lenient_ids.append(obj_id)
            lenient.append(box)
            if vis >= v_strict:
                strict_ids.append(obj_id)
                strict.append(box)
    return GroundTruthSets(tuple(strict_ids), tuple(strict),
                           tuple(lenient_ids), tuple(lenient))


def precision_recall(predictions, references, iou_threshold: float = 0.25
                     ) -> tuple[float, float, list[tuple[int, int, float]]]:
    """Single-set precision/recall with optimal class-aware matching.

    Empty conventions: no predictions -> precision 1 only if there are no
    references (else 0); no references -> recall 1.
    """
    matches = match_boxes(list(predictions), list(references), iou_threshold)
    tp = len(matches)
    if predictions:
        precision = tp / len(predictions)
    else:
        precision = 1.0 if not references else 0.0
    recall = tp / len(references) if references else 1.0
    return precision, recall, matches


def fuzzy_f1(predictions, gt_sets: GroundTruthSets,
             iou_threshold: float = 0.25) -> float:
    """Harmonic mean of strict-set recall and lenient-set precision.

    One matching pass against the lenient set; matched pairs whose
    reference id is in the strict set are the strict true positives.
    """
    preds = list(predictions)
    matches = match_boxes(preds, list(gt_sets.lenient), iou_threshold)
    tp_lenient = len(matches)
    strict_id_set = set(gt_sets.strict_ids)
    tp_strict = sum(1 for _, j, _ in matches
                    if gt_sets.lenient_ids[j] in strict_id_set)
    if preds:
        precision = tp_lenient / len(preds)
    else:
        precision = 1.0 if not gt_sets.lenient else 0.0
    recall = tp_strict / len(gt_sets.strict) if gt_sets.strict else 1.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class ClassReport:
    category: str
    n_pred: int
    n_strict: int
    n_lenient: int
    tp_strict: int
    tp_lenient: int
    fp: int
    fn: int
    precision: float
    recall: float
    fuzzy_f1: float
    vanilla_f1: float

    def to_dict(self) -> dict:
        return {
            "category": self.category,
            "n_pred": self.n_pred,
            "n_strict": self.n_strict,
            "n_lenient": self.n_lenient,
            "tp_strict": self.tp_strict,
            "tp_lenient": self.tp_lenient,
            "fp": self.fp,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "fuzzy_f1": self.fuzzy_f1,
            "vanilla_f1": self.vanilla_f1,
        }


@dataclass(frozen=True)
class EvalReport:
    per_class: dict[str, ClassReport]
    scored_categories: tuple[str, ...]
    skipped_categories: tuple[str, ...]
    macro_fuzzy_f1: float
    iou_threshold: float
    no_op: bool

    def to_dict(self) -> dict:
        return {
            "macro_fuzzy_f1": self.macro_fuzzy_f1,
            "iou_threshold": self.iou_threshold,
            "no_op": self.no_op,
            "scored_categories": list(self.scored_categories),
            "skipped_categories": list(self.skipped_categories),
            "per_class": {k: v.to_dict() for k, v in self.per_class.items()},
        }


def evaluate_report(predictions, gt_sets: GroundTruthSets,
                    categories: tuple[str, ...] = CANONICAL_CATEGORIES,
                    iou_threshold: float = 0.25) -> EvalReport:
    """Per-category breakdown plus macro-averaged fuzzy F1.

    Categories with no predictions and no lenient annotations are skipped
    from the macro average. A report where every category is skipped is
    flagged no_op (macro 0.0). vanilla_f1 is the ordinary F1 against the
    strict set alone, so strict == lenient implies fuzzy == vanilla.
    """
    preds = list(predictions)
    per_class: dict[str, ClassReport] = {}
    scored, skipped = [], []
    for cat in categories:
        cat_preds = [b for b in preds if b.label == cat]
        keep = [i for i, cid in enumerate(gt_sets.lenient_ids)
                if gt_sets.lenient[i].label == cat]
        lenient_ids = tuple(gt_sets.lenient_ids[i] for i in keep)
        lenient = tuple(gt_sets.lenient[i] for i in keep)
        strict_keep = [i for i, cid in enumerate(gt_sets.strict_ids)
                       if gt_sets.strict[i].label == cat]
        strict_ids = tuple(gt_sets.strict_ids[i] for i in strict_keep)
        strict = tuple(gt_sets.strict[i] for i in strict_keep)
        if not cat_preds and not lenient:
            skipped.append(cat)
            continue
        sub = GroundTruthSets(strict_ids, strict, lenient_ids, lenient)
        matches = match_boxes(cat_preds, list(lenient), iou_threshold)
        tp_lenient = len(matches)
        strict_id_set = set(strict_ids)
        tp_strict = sum(1 for _, j, _ in matches if lenient_ids[j] in strict_id_set)
        if cat_preds:
            precision = tp_lenient / len(cat_preds)
        else:
            precision = 1.0 if not lenient else 0.0
        recall = tp_strict / len(strict) if strict else 1.0
        f_fuzzy = fuzzy_f1(cat_preds, sub, iou_threshold)
        vp, vr, _ = precision_recall(cat_preds, list(strict), iou_threshold)
        vanilla = 0.0 if vp + vr == 0 else 2 * vp * vr / (vp + vr)
        per_class[cat] = ClassReport(
            category=cat,
            n_pred=len(cat_preds),
            n_strict=len(strict),
            n_lenient=len(lenient),
            tp_strict=tp_strict,
            tp_lenient=tp_lenient,
            fp=len(cat_preds) - tp_lenient,
            fn=len(strict) - tp_strict,
            precision=precision,
            recall=recall,
            fuzzy_f1=f_fuzzy,
            vanilla_f1=vanilla,
        )
        scored.append(cat)
    macro = (sum(per_class[c].fuzzy_f1 for c in scored) / len(scored)
             if scored else 0.0)
    return EvalReport(per_class=per_class, scored_categories=tuple(scored),
                      skipped_categories=tuple(skipped), macro_fuzzy_f1=macro,
                      iou_threshold=float(iou_threshold), no_op=not scored)
