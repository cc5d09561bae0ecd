"""Duplicate query removal and per-stage query budgets.

Removal is greedy class-agnostic NMS applied as a pre-processing filter:
queries are visited by descending score (ties: lower index first) and a
query is dropped outright when it overlaps an already kept query with
IoU >= threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .dense_queries import QuerySet
from .errors import ValidationError

DEFAULT_IOU_THRESHOLD = 0.7
DEFAULT_STAGE_BUDGETS = (300, 200)


@dataclass(frozen=True)
class DqrConfig:
    iou_threshold: float = DEFAULT_IOU_THRESHOLD
    stage_budgets: tuple[int, ...] = field(default=DEFAULT_STAGE_BUDGETS)

    def __post_init__(self):
        if not 0.0 < self.iou_threshold < 1.0:
            raise ValidationError(f"iou_threshold must be in (0, 1), got {self.iou_threshold}")
        budgets = tuple(int(b) for b in self.stage_budgets)
        if not budgets or any(b <= 0 for b in budgets):
            raise ValidationError(f"stage budgets must be positive, got {budgets}")
        if any(b2 > b1 for b1, b2 in zip(budgets, budgets[1:])):
            raise ValidationError(f"stage budgets must be non-increasing, got {budgets}")
        object.__setattr__(self, "stage_budgets", budgets)


def score_order(scores) -> np.ndarray:
    """Indices by descending score, ties to the lower index."""
    scores = np.asarray(scores, dtype=np.float64)
    return np.argsort(-scores, kind="stable")


def nms_indices(boxes, scores, iou_threshold=DEFAULT_IOU_THRESHOLD, max_keep=None) -> np.ndarray:
    """Kept indices (in descending-score order) for raw box/score arrays."""
    if scores is None:
        raise ValidationError("NMS needs scores")
    if not 0.0 < iou_threshold < 1.0:
        raise ValidationError(f"iou_threshold must be in (0, 1), got {iou_threshold}")
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if scores.shape[0] != boxes.shape[0]:
        raise ValidationError(f"{boxes.shape[0]} boxes but {scores.shape[0]} scores")
    if np.isnan(scores).any():
        raise ValidationError("scores contain NaN")
    if max_keep is None:
        max_keep = boxes.shape[0]
    if max_keep < 0:
        raise ValidationError(f"max_keep must be >= 0, got {max_keep}")
    return kernels.greedy_nms(boxes, score_order(scores), float(iou_threshold), int(max_keep))


def class_agnostic_nms(q: QuerySet, iou_threshold: float = DEFAULT_IOU_THRESHOLD,
                       max_keep: int | None = None) -> tuple[QuerySet, np.ndarray]:
    kept = nms_indices(q.boxes, q.scores, iou_threshold, max_keep)
    return q.take(kept), kept


def topk_by_score(q: QuerySet, k: int) -> QuerySet:
    return q.take(topk_indices(q.scores, k))


def topk_indices(scores, k: int) -> np.ndarray:
    if k < 0:
        raise ValidationError(f"k must be >= 0, got {k}")
    return score_order(scores)[:k]


def cascade_select(q: QuerySet, cfg: DqrConfig, stage: int) -> QuerySet:
    """DQR for one refinement stage: NMS capped at that stage's budget."""
    if not 0 <= stage < len(cfg.stage_budgets):
        raise ValidationError(
            f"stage {stage} out of range for {len(cfg.stage_budgets)} budgets"
        )
    out, _ = class_agnostic_nms(q, cfg.iou_threshold, cfg.stage_budgets[stage])
    return out
