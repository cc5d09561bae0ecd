"""Classification and regression losses with analytic input gradients.

Probabilities are clamped to ``[EPS, 1 - EPS]`` before any logarithm.
Gradients are taken with respect to the (unclamped) probability or box
coordinate and are exact inside the clamp range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assignment import DEFAULT_WEIGHTS, AssignmentResult, normalized_center_delta
from .dense_queries import QuerySet
from .errors import ValidationError
from .geometry import as_box_array, box_areas, giou, pairwise_iou

EPS = 1e-12


@dataclass(frozen=True)
class LossBreakdown:
    cls_loss: float
    l1_loss: float
    giou_loss: float
    total: float
    weights: tuple[float, float, float] = DEFAULT_WEIGHTS
    num_matched: int = 0

    def to_dict(self) -> dict:
        return {
            "cls_loss": self.cls_loss,
            "l1_loss": self.l1_loss,
            "giou_loss": self.giou_loss,
            "total": self.total,
            "num_matched": self.num_matched,
        }


def clamp_prob(p):
    return np.clip(p, EPS, 1.0 - EPS)


def bce(p, y):
    """Binary cross-entropy ``-[y log p + (1 - y) log(1 - p)]``; y may be soft."""
    p = clamp_prob(np.asarray(p, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    out = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    return float(out) if out.ndim == 0 else out


def bce_grad(p, y):
    p = clamp_prob(np.asarray(p, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    out = -y / p + (1.0 - y) / (1.0 - p)
    return float(out) if out.ndim == 0 else out


def duplicate_gradient_ratio(p):
    """Scale of the positive score gradient when a query has an identical twin.

    With two identical queries of probability ``p`` competing for one target,
    one is matched (target 1) and the other is not (target 0), giving loss
    ``-log p - log(1 - p)``; alone the loss is ``-log p``. The ratio of
    their derivatives in ``p`` is ``1 - p / (1 - p)``: it shrinks below 1
    for ``p < 0.5`` and turns negative past 0.5.
    """
    p = np.asarray(p, dtype=np.float64)
    if ((p <= 0.0) | (p >= 1.0) | np.isnan(p)).any():
        raise ValidationError("duplicate_gradient_ratio needs 0 < p < 1")
    out = 1.0 - p / (1.0 - p)
    return float(out) if out.ndim == 0 else out


def qfl(sigma, target, beta=2.0):
    """Quality focal loss: ``|target - sigma|**beta * bce(sigma, target)``."""
    if beta < 0:
        raise ValidationError(f"beta must be >= 0, got {beta}")
    target = np.asarray(target, dtype=np.float64)
    if ((target < 0.0) | (target > 1.0)).any():
        raise ValidationError("qfl target must lie in [0, 1]")
    s = clamp_prob(np.asarray(sigma, dtype=np.float64))
    out = np.abs(target - s) ** beta * bce(s, target)
    return float(out) if np.ndim(out) == 0 else out


def qfl_grad(sigma, target, beta=2.0):
    if beta < 0:
        raise ValidationError(f"beta must be >= 0, got {beta}")
    target = np.asarray(target, dtype=np.float64)
    s = clamp_prob(np.asarray(sigma, dtype=np.float64))
    diff = s - target
    mod = np.abs(diff) ** beta
    if beta == 0:
        dmod = np.zeros_like(diff)
    else:
        dmod = beta * np.abs(diff) ** (beta - 1.0) * np.sign(diff)
    out = dmod * bce(s, target) + mod * bce_grad(s, target)
    return float(out) if np.ndim(out) == 0 else out


def regression_loss(pred, gt, image_size) -> tuple[float, float]:
    """``(l1, 1 - giou)`` for one predicted box against its ground truth.

    ``l1`` is the mean over (cx, cy, w, h) of the absolute difference
    divided by the matching image dimension.
    """
    gt_arr = as_box_array(gt)
    if box_areas(gt_arr)[0] <= 0.0:
        raise ValidationError("regression target must be non-degenerate")
    pred_arr = as_box_array(pred)
    l1 = float(normalized_center_delta(pred_arr[0], gt_arr[0], image_size).mean())
    return l1, 1.0 - giou(pred_arr, gt_arr)


def regression_loss_grad(pred, gt, image_size) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of ``(l1, 1 - giou)`` with respect to the predicted corners."""
    a1, b1, a2, b2 = np.asarray(pred, dtype=np.float64).reshape(4)
    g1, h1, g2, h2 = np.asarray(gt, dtype=np.float64).reshape(4)
    w_img, h_img = image_size

    # l1 over center form; d(cx, cy, w, h)/d(a1, b1, a2, b2)
    dcx = np.sign((a1 + a2) / 2.0 - (g1 + g2) / 2.0)
    dcy = np.sign((b1 + b2) / 2.0 - (h1 + h2) / 2.0)
    dw = np.sign((a2 - a1) - (g2 - g1))
    dh = np.sign((b2 - b1) - (h2 - h1))
    grad_l1 = np.array([
        (0.5 * dcx - dw) / w_img,
        (0.5 * dcy - dh) / h_img,
        (0.5 * dcx + dw) / w_img,
        (0.5 * dcy + dh) / h_img,
    ]) / 4.0

    # 1 - giou = 2 - I/U - U/E
    pw, ph = a2 - a1, b2 - b1
    area_p = pw * ph
    area_g = (g2 - g1) * (h2 - h1)
    iw = min(a2, g2) - max(a1, g1)
    ih = min(b2, h2) - max(b1, h1)
    if iw > 0 and ih > 0:
        inter = iw * ih
        d_iw = np.array([-1.0 if a1 > g1 else 0.0, 0.0, 1.0 if a2 < g2 else 0.0, 0.0])
        d_ih = np.array([0.0, -1.0 if b1 > h1 else 0.0, 0.0, 1.0 if b2 < h2 else 0.0])
        d_inter = ih * d_iw + iw * d_ih
    else:
        inter = 0.0
        d_inter = np.zeros(4)
    d_area_p = np.array([-ph, -pw, ph, pw])
    union = area_p + area_g - inter
    d_union = d_area_p - d_inter
    ew = max(a2, g2) - min(a1, g1)
    eh = max(b2, h2) - min(b1, h1)
    encl = ew * eh
    d_ew = np.array([-1.0 if a1 < g1 else 0.0, 0.0, 1.0 if a2 > g2 else 0.0, 0.0])
    d_eh = np.array([0.0, -1.0 if b1 < h1 else 0.0, 0.0, 1.0 if b2 > h2 else 0.0])
    d_encl = eh * d_ew + ew * d_eh
    grad_giou = -(d_inter * union - inter * d_union) / union ** 2 \
        - (d_union * encl - union * d_encl) / encl ** 2
    return grad_l1, grad_giou


def _check_match(q: QuerySet, n_gt: int, match: AssignmentResult):
    seen_q, seen_g = set(), set()
    for qi, g in match.pairs:
        if not (0 <= qi < len(q)) or not (0 <= g < n_gt):
            raise ValidationError(f"match pair {(qi, g)} out of range for {len(q)} queries, {n_gt} gts")
        if qi in seen_q or g in seen_g:
            raise ValidationError(f"match pair {(qi, g)} repeats an index")
        seen_q.add(qi)
        seen_g.add(g)


def classification_targets(q: QuerySet, gts, match: AssignmentResult, mode: str = "bce") -> np.ndarray:
    """Per-query soft target: 0 unmatched; 1 (bce) or IoU with its gt (qfl)."""
    gt_boxes = as_box_array(gts)
    targets = np.zeros(len(q))
    for qi, g in match.pairs:
        if mode == "qfl":
            targets[qi] = pairwise_iou(q.boxes[qi], gt_boxes[g])[0, 0]
        else:
            targets[qi] = 1.0
    return targets


def set_prediction_loss(q: QuerySet, gts, match: AssignmentResult, weights=DEFAULT_WEIGHTS,
                        image_size=None, mode: str = "bce", beta: float = 2.0) -> LossBreakdown:
    """Set-prediction loss over a matched query set.

    Every query pays a classification loss against its target (see
    :func:`classification_targets`); matched queries also pay L1 and GIoU
    regression. Classification is summed and divided by ``max(matched, 1)``,
    regression is averaged over matched pairs.
    """
    if mode not in ("bce", "qfl"):
        raise ValidationError(f"unknown classification mode {mode!r}")
    gt_boxes = as_box_array(gts)
    _check_match(q, gt_boxes.shape[0], match)
    if image_size is None:
        image_size = q.meta.get("image_size")
    n_matched = len(match.pairs)
    if n_matched and image_size is None:
        raise ValidationError("image_size is required for the regression terms")
    targets = classification_targets(q, gt_boxes, match, mode)
    if mode == "qfl":
        cls_sum = float(np.sum(qfl(q.scores, targets, beta)))
    else:
        cls_sum = float(np.sum(bce(q.scores, targets)))
    cls_loss = cls_sum / max(n_matched, 1)
    l1_sum = giou_sum = 0.0
    for qi, g in match.pairs:
        l1, gl = regression_loss(q.boxes[qi], gt_boxes[g], image_size)
        l1_sum += l1
        giou_sum += gl
    l1_loss = l1_sum / n_matched if n_matched else 0.0
    giou_loss = giou_sum / n_matched if n_matched else 0.0
    w_cls, w_l1, w_giou = (float(w) for w in weights)
    total = w_cls * cls_loss + w_l1 * l1_loss + w_giou * giou_loss
    return LossBreakdown(cls_loss, l1_loss, giou_loss, total, (w_cls, w_l1, w_giou), n_matched)


def set_prediction_score_grad(q: QuerySet, gts, match: AssignmentResult, weights=DEFAULT_WEIGHTS,
                              mode: str = "bce", beta: float = 2.0) -> np.ndarray:
    """Gradient of ``set_prediction_loss(...).total`` with respect to each
    query score, holding boxes and the match fixed."""
    gt_boxes = as_box_array(gts)
    _check_match(q, gt_boxes.shape[0], match)
    targets = classification_targets(q, gt_boxes, match, mode)
    if mode == "qfl":
        g = qfl_grad(q.scores, targets, beta)
    else:
        g = bce_grad(q.scores, targets)
    return float(weights[0]) * np.asarray(g) / max(len(match.pairs), 1)
