"""One-to-one query/ground-truth matching with a center prior.

The matching cost for query ``i`` and ground truth ``j`` is::

    w_cls * (-score_i) + w_l1 * L1(box_i, gt_j) + w_giou * (1 - giou(box_i, gt_j))

where L1 is the mean absolute difference of center-form boxes normalized
by the image width/height. Pairs outside the center-prior candidate mask
are forbidden: they carry a finite sentinel cost large enough that any
matching using fewer forbidden pairs is cheaper, and they are dropped from
results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .dense_queries import FeaturePyramid, QuerySet
from .errors import ValidationError
from .geometry import as_box_array, box_areas, convert, pairwise_giou

DEFAULT_WEIGHTS = (2.0, 5.0, 2.0)
DEFAULT_K = 9


@dataclass
class CostMatrix:
    values: np.ndarray
    weights: tuple[float, float, float] = DEFAULT_WEIGHTS
    cls: np.ndarray | None = None
    l1: np.ndarray | None = None
    giou: np.ndarray | None = None
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValidationError(f"cost matrix must be 2-D, got shape {self.values.shape}")
        if self.mask is None:
            self.mask = np.ones(self.values.shape, dtype=bool)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.values.shape:
            raise ValidationError("mask shape differs from cost shape")
        if not np.isfinite(self.values[self.mask]).all():
            raise ValidationError("candidate costs must be finite")

    @property
    def shape(self):
        return self.values.shape

    def masked(self, mask) -> "CostMatrix":
        mask = np.asarray(mask, dtype=bool) & self.mask
        return CostMatrix(self.values, self.weights, self.cls, self.l1, self.giou, mask)

    def forbidden_cost(self) -> float:
        feasible = self.values[self.mask]
        if feasible.size == 0:
            return 1.0
        hi, lo = float(feasible.max()), float(feasible.min())
        k = min(self.values.shape)
        return hi + k * (hi - lo) + 1.0

    def solver_matrix(self) -> np.ndarray:
        return np.where(self.mask, self.values, self.forbidden_cost())

    def breakdown(self, i: int, j: int) -> dict:
        out = {"total": float(self.values[i, j])}
        for name in ("cls", "l1", "giou"):
            comp = getattr(self, name)
            if comp is not None:
                out[name] = float(comp[i, j])
        return out


@dataclass
class AssignmentResult:
    pairs: list[tuple[int, int]]
    unmatched_queries: list[int]
    unmatched_gts: list[int]
    total_cost: float
    breakdown: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "pairs": [[int(q), int(g)] for q, g in self.pairs],
            "unmatched_queries": [int(i) for i in self.unmatched_queries],
            "unmatched_gts": [int(j) for j in self.unmatched_gts],
            "total_cost": float(self.total_cost),
            "breakdown": self.breakdown,
        }

    @property
    def query_to_gt(self) -> dict[int, int]:
        return {q: g for q, g in self.pairs}


def normalized_center_delta(pred, gt, image_size) -> np.ndarray:
    """Per-coordinate ``|cxcywh(pred) - cxcywh(gt)|`` divided by (W, H, W, H)."""
    w, h = image_size
    scale = np.array([w, h, w, h], dtype=np.float64)
    return np.abs(convert(pred, "xyxy", "cxcywh") - convert(gt, "xyxy", "cxcywh")) / scale


def build_cost_matrix(q: QuerySet, gts, weights=DEFAULT_WEIGHTS, image_size=None) -> CostMatrix:
    gt_boxes = as_box_array(gts)
    if gt_boxes.shape[0] == 0:
        raise ValidationError("cost matrix needs at least one ground truth")
    if image_size is None:
        image_size = q.meta.get("image_size")
    if image_size is None:
        raise ValidationError("image_size is required to normalize the L1 cost")
    w_cls, w_l1, w_giou = (float(w) for w in weights)
    pred_c = convert(q.boxes, "xyxy", "cxcywh")
    gt_c = convert(gt_boxes, "xyxy", "cxcywh")
    scale = np.array([image_size[0], image_size[1], image_size[0], image_size[1]], dtype=np.float64)
    l1 = (np.abs(pred_c[:, None, :] - gt_c[None, :, :]) / scale).mean(axis=2)
    cls = np.broadcast_to(-q.scores[:, None], l1.shape).copy()
    giou_term = 1.0 - pairwise_giou(q.boxes, gt_boxes)
    values = w_cls * cls + w_l1 * l1 + w_giou * giou_term
    return CostMatrix(values, (w_cls, w_l1, w_giou), cls, l1, giou_term)


def hungarian(c) -> AssignmentResult:
    """Minimum-cost one-to-one matching of rows (queries) to columns (gts).

    Rectangular inputs are solved directly with the smaller side as the
    assigned side. Forbidden pairs never appear in the result; a gt left
    with no feasible query is reported in ``unmatched_gts``.
    """
    if not isinstance(c, CostMatrix):
        c = CostMatrix(np.asarray(c, dtype=np.float64))
    n_q, n_g = c.shape
    pairs: list[tuple[int, int]] = []
    if n_q and n_g:
        m = c.solver_matrix()
        if n_g <= n_q:
            cols = kernels.solve_assignment(m.T)
            cand = [(int(cols[g]), g) for g in range(n_g)]
        else:
            cols = kernels.solve_assignment(m)
            cand = [(qi, int(cols[qi])) for qi in range(n_q)]
        pairs = sorted(((qi, g) for qi, g in cand if c.mask[qi, g]), key=lambda p: p[1])
    matched_q = {qi for qi, _ in pairs}
    matched_g = {g for _, g in pairs}
    total = 0.0
    for qi, g in pairs:
        total += c.values[qi, g]
    return AssignmentResult(
        pairs=pairs,
        unmatched_queries=[i for i in range(n_q) if i not in matched_q],
        unmatched_gts=[j for j in range(n_g) if j not in matched_g],
        total_cost=float(total),
        breakdown=[dict(query=qi, gt=g, **c.breakdown(qi, g)) for qi, g in pairs],
    )


def center_prior_candidates(pyramid: FeaturePyramid, gts, k: int = DEFAULT_K) -> np.ndarray:
    """``(num_points, num_gts)`` mask of the ``min(k, level size)`` points per
    level nearest to each gt center (ties to the lower point index)."""
    if k < 1:
        raise ValidationError(f"K must be >= 1, got {k}")
    gt_boxes = as_box_array(gts)
    mask = np.zeros((pyramid.num_points, gt_boxes.shape[0]), dtype=bool)
    if gt_boxes.shape[0] == 0:
        return mask
    centers = convert(gt_boxes, "xyxy", "cxcywh")[:, :2]
    for lv in pyramid.levels:
        pts = pyramid.level_points(lv.level)
        start = pyramid.offsets[lv.level]
        take = min(k, lv.num_points)
        d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        for j in range(centers.shape[0]):
            nearest = np.argsort(d2[:, j], kind="stable")[:take]
            mask[start + nearest, j] = True
    return mask


def query_candidate_mask(q: QuerySet, pyramid: FeaturePyramid, gts, k: int = DEFAULT_K) -> np.ndarray:
    """Center-prior mask lifted from pyramid points to queries via origin tags."""
    point_mask = center_prior_candidates(pyramid, gts, k)
    return point_mask[pyramid.global_index(q.levels, q.indices)]


def center_prior_match(q: QuerySet, pyramid: FeaturePyramid, gts, k: int = DEFAULT_K,
                       weights=DEFAULT_WEIGHTS) -> AssignmentResult:
    gt_boxes = as_box_array(gts)
    n_q = len(q)
    if gt_boxes.shape[0] == 0:
        return AssignmentResult([], list(range(n_q)), [], 0.0, [])
    if (box_areas(gt_boxes) <= 0).any():
        raise ValidationError("ground-truth boxes must be non-degenerate")
    mask = query_candidate_mask(q, pyramid, gt_boxes, k)
    rows = np.flatnonzero(mask.any(axis=1))
    sub = q.take(rows)
    cost = build_cost_matrix(sub, gt_boxes, weights, (pyramid.image_w, pyramid.image_h))
    res = hungarian(cost.masked(mask[rows]))
    pairs = [(int(rows[i]), g) for i, g in res.pairs]
    for b in res.breakdown:
        b["query"] = int(rows[b["query"]])
    matched = {i for i, _ in pairs}
    return AssignmentResult(
        pairs=pairs,
        unmatched_queries=[i for i in range(n_q) if i not in matched],
        unmatched_gts=res.unmatched_gts,
        total_cost=res.total_cost,
        breakdown=res.breakdown,
    )

