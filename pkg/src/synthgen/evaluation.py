"""COCO-style detection evaluation: IoU, greedy matching, 101-point AP, mAP."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import EvaluationError

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_POINTS = np.linspace(0.0, 1.0, 101)
# a detection whose IoU equals the threshold up to rounding still matches
IOU_EPS = 1e-12


@dataclass(frozen=True)
class DetectionRecord:
    image_id: int
    category_id: int
    bbox: tuple[float, float, float, float]
    score: float = 1.0

    def __post_init__(self):
        x, y, w, h = self.bbox
        if not all(math.isfinite(v) for v in self.bbox) or w <= 0 or h <= 0:
            raise EvaluationError(f"invalid bbox {self.bbox}")
        if not (math.isfinite(self.score) and 0.0 <= self.score <= 1.0):
            raise EvaluationError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class GroundTruth:
    image_id: int
    category_id: int
    bbox: tuple[float, float, float, float]


def iou(a, b) -> float:
    """Intersection over union of two ``(x, y, w, h)`` boxes."""
    ax, ay, aw, ah = (float(v) for v in (a.as_list() if hasattr(a, "as_list") else a))
    bx, by, bw, bh = (float(v) for v in (b.as_list() if hasattr(b, "as_list") else b))
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (aw * ah + bw * bh - inter)


def _order(dets) -> list[int]:
    # descending score, ties keep input order (sorted() is stable)
    return sorted(range(len(dets)), key=lambda i: -dets[i].score)


@dataclass
class MatchResult:
    order: list[int]              # detection indices by descending score
    det_to_gt: dict[int, int]     # detection index -> matched gt index
    unmatched_dets: list[int]
    unmatched_gts: list[int]

    @property
    def tp(self) -> int:
        return len(self.det_to_gt)

    @property
    def fp(self) -> int:
        return len(self.unmatched_dets)

    @property
    def fn(self) -> int:
        return len(self.unmatched_gts)


def match_detections(dets, gts, iou_threshold: float, max_dets: Optional[int] = None) -> MatchResult:
    """Greedy matching per image and class.

    Detections are visited by descending score; each takes the unmatched
    ground truth of its image and class with the highest IoU, provided that
    IoU reaches ``iou_threshold``. ``max_dets`` keeps only the top-scoring
    detections per image and class.
    """
    order = _order(dets)
    if max_dets is not None:
        seen: dict[tuple[int, int], int] = {}
        kept = []
        for i in order:
            key = (dets[i].image_id, dets[i].category_id)
            seen[key] = seen.get(key, 0) + 1
            if seen[key] <= max_dets:
                kept.append(i)
        order = kept
    by_key: dict[tuple[int, int], list[int]] = {}
    for j, g in enumerate(gts):
        by_key.setdefault((g.image_id, g.category_id), []).append(j)
    taken: set[int] = set()
    det_to_gt: dict[int, int] = {}
    unmatched = []
    for i in order:
        d = dets[i]
        best, best_iou = -1, -1.0
        for j in by_key.get((d.image_id, d.category_id), ()):
            if j in taken:
                continue
            v = iou(d.bbox, gts[j].bbox)
            if v >= iou_threshold - IOU_EPS and v > best_iou:
                best, best_iou = j, v
        if best >= 0:
            taken.add(best)
            det_to_gt[i] = best
        else:
            unmatched.append(i)
    return MatchResult(order, det_to_gt, unmatched, [j for j in range(len(gts)) if j not in taken])


def precision_recall(tp_flags, n_gt: int) -> tuple[np.ndarray, np.ndarray]:
    tp = np.cumsum(np.asarray(tp_flags, dtype=float))
    k = np.arange(1, len(tp) + 1)
    return tp / np.maximum(k, 1), tp / max(n_gt, 1)


def average_precision(tp_flags, n_gt: int) -> float:
    """101-point interpolated AP of detections already sorted by descending score."""
    if n_gt <= 0:
        raise EvaluationError("average precision is undefined without ground truth")
    if len(tp_flags) == 0:
        return 0.0
    prec, rec = precision_recall(tp_flags, n_gt)
    envelope = np.maximum.accumulate(prec[::-1])[::-1]
    idx = np.searchsorted(rec, RECALL_POINTS, side="left")
    vals = np.where(idx < len(envelope), envelope[np.minimum(idx, len(envelope) - 1)], 0.0)
    return float(vals.mean())


@dataclass
class ApResult:
    thresholds: tuple[float, ...]
    per_class: dict[int, list[float]]          # AP at each threshold
    n_gt: dict[int, int]
    precision: dict[int, list[list[float]]] = field(default_factory=dict)
    recall: dict[int, list[list[float]]] = field(default_factory=dict)

    @property
    def per_threshold(self) -> list[float]:
        if not self.per_class:
            return [0.0] * len(self.thresholds)
        return [float(np.mean([aps[t] for aps in self.per_class.values()])) for t in range(len(self.thresholds))]

    @property
    def map50(self) -> float:
        return self.per_threshold[self.thresholds.index(0.5)]

    @property
    def map50_95(self) -> float:
        return float(np.mean(self.per_threshold))

    def to_dict(self) -> dict:
        return {
            "map50": self.map50,
            "map50_95": self.map50_95,
            "thresholds": list(self.thresholds),
            "per_threshold": self.per_threshold,
            "per_class": {str(c): {"ap": aps, "n_gt": self.n_gt[c]} for c, aps in sorted(self.per_class.items())},
            "precision": {str(c): v for c, v in sorted(self.precision.items())},
            "recall": {str(c): v for c, v in sorted(self.recall.items())},
        }


def evaluate(dets, gts, thresholds=IOU_THRESHOLDS, max_dets: Optional[int] = None) -> ApResult:
    """Per-class AP at each IoU threshold; classes without ground truth are left out."""
    if not gts:
        raise EvaluationError("evaluation needs at least one ground-truth box")
    classes = sorted({g.category_id for g in gts})
    per_class, precision, recall, n_gt = {}, {}, {}, {}
    for c in classes:
        cd = [d for d in dets if d.category_id == c]
        cg = [g for g in gts if g.category_id == c]
        n_gt[c] = len(cg)
        aps, precs, recs = [], [], []
        for t in thresholds:
            m = match_detections(cd, cg, t, max_dets)
            flags = [i in m.det_to_gt for i in m.order]
            aps.append(average_precision(flags, len(cg)))
            p, r = precision_recall(flags, len(cg))
            precs.append(p.tolist())
            recs.append(r.tolist())
        per_class[c] = aps
        precision[c] = precs
        recall[c] = recs
    return ApResult(tuple(thresholds), per_class, n_gt, precision, recall)


# ---------------------------------------------------------------- IO


def _load_json(src):
    if isinstance(src, (str, Path)):
        try:
            return json.loads(Path(src).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise EvaluationError(f"{src}: malformed JSON ({exc})") from None
        except OSError as exc:
            raise EvaluationError(f"{src}: {exc.strerror}") from None
    return src


def _box(v, where) -> tuple[float, float, float, float]:
    if not isinstance(v, (list, tuple)) or len(v) != 4 or not all(isinstance(x, (int, float)) for x in v):
        raise EvaluationError(f"{where}: bbox must be [x, y, w, h]")
    return tuple(float(x) for x in v)


def load_ground_truth(src) -> list[GroundTruth]:
    """Read a COCO ground-truth document (``annotations`` with ``image_id``, ``category_id``, ``bbox``)."""
    doc = _load_json(src)
    if not isinstance(doc, dict) or not isinstance(doc.get("annotations"), list):
        raise EvaluationError("ground truth: expected a COCO document with an 'annotations' list")
    out = []
    for k, a in enumerate(doc["annotations"]):
        try:
            if a.get("iscrowd", 0):
                continue
            out.append(GroundTruth(int(a["image_id"]), int(a["category_id"]), _box(a["bbox"], f"annotation {k}")))
        except (KeyError, TypeError, AttributeError) as exc:
            raise EvaluationError(f"ground truth annotation {k}: missing field {exc}") from None
    return out


def load_detections(src) -> list[DetectionRecord]:
    """Read a COCO results list of ``{image_id, category_id, bbox, score}``."""
    doc = _load_json(src)
    if not isinstance(doc, list):
        raise EvaluationError("detections: expected a JSON list of result records")
    out = []
    for k, d in enumerate(doc):
        try:
            out.append(DetectionRecord(int(d["image_id"]), int(d["category_id"]), _box(d["bbox"], f"detection {k}"),
                                       float(d.get("score", 1.0))))
        except (KeyError, TypeError, AttributeError, ValueError) as exc:
            raise EvaluationError(f"detection {k}: {exc}") from None
    return out


def format_table(result: ApResult, names: Optional[dict[int, str]] = None) -> str:
    names = names or {}
    lines = [f"{'class':<20} {'n_gt':>6} {'AP@50':>8} {'AP@50-95':>9}"]
    for c, aps in sorted(result.per_class.items()):
        label = f"{c} {names.get(c, '')}".strip()
        lines.append(f"{label:<20} {result.n_gt[c]:>6d} {aps[0]:>8.4f} {float(np.mean(aps)):>9.4f}")
    lines.append(f"{'mean':<20} {sum(result.n_gt.values()):>6d} {result.map50:>8.4f} {result.map50_95:>9.4f}")
    return "\n".join(lines) + "\n"


__all__ = ["DetectionRecord", "GroundTruth", "iou", "match_detections", "average_precision", "evaluate",
           "ApResult", "MatchResult", "load_ground_truth", "load_detections", "format_table", "IOU_THRESHOLDS"]
