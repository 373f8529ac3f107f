"""Optimal assignment and oriented-box matching/merging.

hungarian() finds a minimum-cost maximal matching and breaks cost ties
deterministically: among all optimal assignments it returns the one whose
sorted-by-row pair list is lexicographically smallest. Entries equal to
the cost matrix's forbidden sentinel are treated as unmatchable; a pair
forced onto the sentinel (a row/col with no allowed partner) is dropped
from the result.

match_boxes() runs per-class assignment on cost 1 - IoU and keeps pairs
with IoU >= threshold. merge_detections() folds a new detection list into
a stored one: a matched stored box with IoU strictly above the threshold
is replaced by the incoming box, everything unmatched is appended.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import OrientedBox3, iou3d


@dataclass(frozen=True)
class Assignment:
    """Result of hungarian(): pairs sorted by row, total cost of kept pairs."""

    pairs: tuple[tuple[int, int], ...]
    total_cost: float


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """Finite cost matrix with an optional forbidden-pair sentinel.

    The sentinel must be strictly larger than any achievable assignment
    cost; from_costs() picks a safe one automatically.
    """

    values: np.ndarray
    forbidden: float | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise ValueError(f"cost matrix must be 2-D, got shape {vals.shape}")
        if not np.isfinite(vals).all():
            raise ValueError("cost matrix entries must be finite")
        if self.forbidden is not None:
            sentinel = float(self.forbidden)
            allowed = vals[vals != sentinel]
            bound = _achievable_bound(vals.shape, allowed)
            if sentinel <= bound:
                raise ValueError(
                    f"forbidden sentinel {sentinel} is not strictly larger than "
                    f"the achievable cost bound {bound}"
                )
            object.__setattr__(self, "forbidden", sentinel)
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_costs(cls, values, forbidden_mask=None) -> "CostMatrix":
        """Build a matrix, replacing masked entries with a safe sentinel."""
        vals = np.asarray(values, dtype=np.float64).copy()
        if forbidden_mask is None:
            return cls(vals, None)
        mask = np.asarray(forbidden_mask, dtype=bool)
        if mask.shape != vals.shape:
            raise ValueError("forbidden_mask shape must match values")
        allowed = vals[~mask]
        if allowed.size and not np.isfinite(allowed).all():
            raise ValueError("allowed costs must be finite")
        sentinel = _achievable_bound(vals.shape, allowed) + 1.0
        vals[mask] = sentinel
        return cls(vals, sentinel)


def _achievable_bound(shape, allowed) -> float:
    k = min(shape)
    peak = float(np.abs(allowed).max()) if allowed.size else 0.0
    return k * peak


def _lsa_total(values: np.ndarray) -> float:
    if min(values.shape) == 0:
        return 0.0
    rr, cc = linear_sum_assignment(values)
    return float(values[rr, cc].sum())


def hungarian(cost) -> Assignment:
    """Minimum-cost maximal matching with lexicographic (row, col) tie-break.

    ``cost`` is a CostMatrix or a finite 2-D array. With an r x c matrix the
    result has min(r, c) pairs before forbidden-pair removal. Empty
    matrices yield an empty assignment.
    """
    if not isinstance(cost, CostMatrix):
        cost = CostMatrix(np.asarray(cost, dtype=np.float64))
    values = cost.values
    nr, nc = values.shape
    need = min(nr, nc)
    if need == 0:
        return Assignment((), 0.0)

    base = _lsa_total(values)
    eps = 1e-9 * max(1.0, abs(base))

    avail_rows = list(range(nr))
    avail_cols = list(range(nc))
    pairs: list[tuple[int, int]] = []
    fixed = 0.0
    while need > 0:
        r = avail_rows[0]
        rest_rows = avail_rows[1:]
        chosen = None
        for ci, c in enumerate(avail_cols):
            rest_cols = avail_cols[:ci] + avail_cols[ci + 1:]
            total = fixed + values[r, c] + _lsa_total(
                values[np.ix_(rest_rows, rest_cols)])
            if abs(total - base) <= eps:
                chosen = c
                rest_after = rest_cols
                break
        if chosen is None:
            if len(avail_rows) == need:  # pragma: no cover - defensive
                raise RuntimeError("assignment refinement lost the optimum")
            # r is unmatched in every optimal assignment
            avail_rows = rest_rows
            continue
        pairs.append((r, chosen))
        fixed += values[r, chosen]
        avail_rows = rest_rows
        avail_cols = rest_after
        need -= 1

    if cost.forbidden is not None:
        kept = [(r, c) for r, c in pairs if values[r, c] != cost.forbidden]
    else:
        kept = pairs
    total_cost = float(sum(values[r, c] for r, c in kept))
    return Assignment(tuple(kept), total_cost)


def match_boxes(predictions: list[OrientedBox3], references: list[OrientedBox3],
                iou_threshold: float = 0.25, class_constrained: bool = True
                ) -> list[tuple[int, int, float]]:
    """Optimal one-to-one box matching on cost 1 - IoU.

    Returns (prediction_index, reference_index, iou) triples sorted by
    prediction index; pairs with IoU < iou_threshold are discarded after
    the assignment. With class_constrained, matching runs independently
    per label.
    """
    if not (0.0 <= iou_threshold <= 1.0):
        raise ValueError(f"iou_threshold must be in [0, 1], got {iou_threshold}")
    if class_constrained:
        groups: dict[str, tuple[list[int], list[int]]] = {}
        for i, b in enumerate(predictions):
            groups.setdefault(b.label, ([], []))[0].append(i)
        for j, b in enumerate(references):
            groups.setdefault(b.label, ([], []))[1].append(j)
        group_list = [groups[k] for k in sorted(groups)]
    else:
        group_list = [(list(range(len(predictions))), list(range(len(references))))]

    out: list[tuple[int, int, float]] = []
    for pred_idx, ref_idx in group_list:
        if not pred_idx or not ref_idx:
            continue
        ious = np.array([[iou3d(predictions[i], references[j]) for j in ref_idx]
                         for i in pred_idx])
        assign = hungarian(1.0 - ious)
        for r, c in assign.pairs:
            iou = float(ious[r, c])
            if iou >= iou_threshold:
                out.append((pred_idx[r], ref_idx[c], iou))
    out.sort()
    return out


def merge_detections(existing: list[OrientedBox3], incoming: list[OrientedBox3],
                     iou_threshold: float = 0.25) -> list[OrientedBox3]:
    """Fold new detections into a stored list (same-class optimal matching).

    Incoming boxes matched to a stored box with IoU strictly greater than
    iou_threshold replace that stored box in place; all other incoming
    boxes are appended in their input order. Merging a list into itself is
    the identity.
    """
    result = list(existing)
    existing_by_class: dict[str, list[int]] = {}
    for idx, box in enumerate(existing):
        existing_by_class.setdefault(box.label, []).append(idx)
    incoming_by_class: dict[str, list[int]] = {}
    for idx, box in enumerate(incoming):
        incoming_by_class.setdefault(box.label, []).append(idx)

    appended: list[tuple[int, OrientedBox3]] = []
    for label in sorted(incoming_by_class):
        inc_idx = incoming_by_class[label]
        ex_idx = existing_by_class.get(label, [])
        matched: dict[int, tuple[int, float]] = {}
        if ex_idx:
            ious = np.array([[iou3d(incoming[i], existing[j]) for j in ex_idx]
                             for i in inc_idx])
            assign = hungarian(1.0 - ious)
            for r, c in assign.pairs:
                matched[inc_idx[r]] = (ex_idx[c], float(ious[r, c]))
        for i in inc_idx:
            hit = matched.get(i)
            if hit is not None and hit[1] > iou_threshold:
                result[hit[0]] = incoming[i]
            else:
                appended.append((i, incoming[i]))

    appended.sort(key=lambda pair: pair[0])
    result.extend(box for _, box in appended)
    return result
