"""Proposal recall and average precision.

Matching is greedy: detections are visited by descending score (ties keep
input order) and each takes the still-unmatched ground truth it overlaps
most, provided IoU >= threshold (ties go to the lower gt index). AP uses
all-point interpolation: the precision envelope summed at every rank where
recall increases, divided by the number of ground truths.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .duplicate_removal import score_order
from .errors import ValidationError
from .geometry import as_box_array, pairwise_iou

COCO_THRESHOLDS = tuple(np.round(np.linspace(0.5, 0.95, 10), 2).tolist())
DEFAULT_AR_KS = (100, 200, 300)


@dataclass(frozen=True)
class DetectionRecord:
    box: tuple[float, float, float, float]
    score: float
    image_id: int | str

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"detection score {self.score} outside [0, 1]")
        object.__setattr__(self, "box", tuple(float(v) for v in as_box_array(self.box)[0]))


@dataclass
class MetricReport:
    ap: float
    ap50: float
    ap75: float
    ap_per_threshold: dict[float, float]
    ar: dict[int, float]
    pr_recall: list[float] = field(default_factory=list)
    pr_precision: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "AP": self.ap,
            "AP50": self.ap50,
            "AP75": self.ap75,
            "AP_per_threshold": {f"{t:.2f}": v for t, v in self.ap_per_threshold.items()},
            "AR": {f"AR@{k}": v for k, v in self.ar.items()},
            "pr_curve": {"recall": self.pr_recall, "precision": self.pr_precision},
        }


def greedy_match(ious: np.ndarray, iou_thresh: float) -> np.ndarray:
    """Gt index matched by each row of ``ious`` (rows already in visit order),
    or -1."""
    n_det, n_gt = ious.shape
    matched = np.full(n_det, -1, dtype=np.intp)
    taken = np.zeros(n_gt, dtype=bool)
    for r in range(n_det):
        row = np.where(taken | (ious[r] < iou_thresh), -1.0, ious[r])
        g = int(np.argmax(row)) if n_gt else -1
        if g >= 0 and row[g] >= 0.0:
            matched[r] = g
            taken[g] = True
    return matched


def _recall_counts(boxes, scores, gts, iou_thresh, k) -> tuple[int, int]:
    gt_boxes = as_box_array(gts)
    n_gt = gt_boxes.shape[0]
    boxes = as_box_array(boxes)
    order = score_order(scores) if scores is not None else np.arange(boxes.shape[0])
    if k is not None:
        if k < 0:
            raise ValidationError(f"k must be >= 0, got {k}")
        order = order[:k]
    if n_gt == 0 or order.size == 0:
        return 0, n_gt
    ious = pairwise_iou(boxes[order], gt_boxes)
    return int((greedy_match(ious, iou_thresh) >= 0).sum()), n_gt


def recall_at(proposals, gts, iou_thresh: float = 0.5, k: int | None = None) -> float:
    """Fraction of gts matched by the top-``k`` proposals; 1.0 with no gts.

    ``proposals`` is a BoxList (scores used for ranking when present) or a
    box array taken in the given order.
    """
    scores = getattr(proposals, "scores", None)
    hit, n_gt = _recall_counts(proposals, scores, gts, iou_thresh, k)
    return 1.0 if n_gt == 0 else hit / n_gt


def _group(dets, gts_per_image):
    images = sorted(set(gts_per_image) | {d.image_id for d in dets}, key=str)
    gts = {img: as_box_array(gts_per_image.get(img, np.zeros((0, 4)))) for img in images}
    return images, gts


def ap_at_threshold(dets, gts_per_image, iou_thresh: float) -> tuple[float, np.ndarray, np.ndarray]:
    """AP plus the raw (recall, precision) sweep at one IoU threshold."""
    dets = list(dets)
    _, gts = _group(dets, gts_per_image)
    n_gt = sum(g.shape[0] for g in gts.values())
    order = score_order([d.score for d in dets])
    taken = {img: np.zeros(g.shape[0], dtype=bool) for img, g in gts.items()}
    tp = np.zeros(len(dets), dtype=bool)
    for r, di in enumerate(order):
        d = dets[di]
        g_boxes = gts[d.image_id]
        if g_boxes.shape[0] == 0:
            continue
        ious = pairwise_iou(np.asarray(d.box), g_boxes)[0]
        row = np.where(taken[d.image_id] | (ious < iou_thresh), -1.0, ious)
        g = int(np.argmax(row))
        if row[g] >= 0.0:
            taken[d.image_id][g] = True
            tp[r] = True
    if n_gt == 0 or len(dets) == 0:
        return 0.0, np.zeros(0), np.zeros(0)
    tp_cum = np.cumsum(tp)
    precision = tp_cum / np.arange(1, len(dets) + 1)
    recall = tp_cum / n_gt
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    total = 0.0
    for r in np.flatnonzero(tp):
        total += envelope[r]
    return float(total / n_gt), recall, precision


def average_recall(dets, gts_per_image, k: int, iou_thresh: float = 0.5) -> float:
    """Micro-averaged recall: gts matched by each image's top-``k``
    detections, summed over images, over all gts."""
    dets = list(dets)
    images, gts = _group(dets, gts_per_image)
    hit = total = 0
    for img in images:
        mine = [d for d in dets if d.image_id == img]
        boxes = np.array([d.box for d in mine]).reshape(-1, 4)
        h, n = _recall_counts(boxes, [d.score for d in mine], gts[img], iou_thresh, k)
        hit += h
        total += n
    return 1.0 if total == 0 else hit / total


def average_precision(dets, gts_per_image, iou_threshs=COCO_THRESHOLDS,
                      ar_ks=DEFAULT_AR_KS) -> MetricReport:
    dets = list(dets)
    per = {}
    for t in iou_threshs:
        per[float(t)] = ap_at_threshold(dets, gts_per_image, float(t))[0]
    _, recall, precision = ap_at_threshold(dets, gts_per_image, 0.5)
    levels = np.linspace(0.0, 1.0, 101)
    pr_precision = [
        float(precision[recall >= lv].max()) if (recall >= lv).any() else 0.0 for lv in levels
    ]
    return MetricReport(
        ap=float(np.mean(list(per.values()))) if per else 0.0,
        ap50=per.get(0.5, ap_at_threshold(dets, gts_per_image, 0.5)[0]),
        ap75=per.get(0.75, ap_at_threshold(dets, gts_per_image, 0.75)[0]),
        ap_per_threshold=per,
        ar={int(k): average_recall(dets, gts_per_image, int(k)) for k in ar_ks},
        pr_recall=levels.tolist(),
        pr_precision=pr_precision,
    )
