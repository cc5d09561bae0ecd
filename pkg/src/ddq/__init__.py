"""Dense distinct query selection for end-to-end detection.

Dense per-point query priors, class-agnostic duplicate removal, center-prior
one-to-one assignment, losses, RoI features, detection metrics, and a
seeded simulator. Hot kernels run in a compiled extension when available
(see ``ddq._backend``).
"""

__version__ = "0.1.0"

from ._backend import BACKEND
from .assignment import (AssignmentResult, CostMatrix, build_cost_matrix, center_prior_candidates,
                         center_prior_match, hungarian)
from .dense_queries import (FeaturePyramid, QuerySet, build_pyramid, count_queries, decode_boxes,
                            make_query_set)
from .duplicate_removal import DqrConfig, cascade_select, class_agnostic_nms, topk_by_score
from .errors import FormatError, ValidationError
from .evaluation import DetectionRecord, MetricReport, average_precision, recall_at
from .geometry import Box, BoxList, convert, giou, iou, pairwise_iou
from .losses import (LossBreakdown, bce, duplicate_gradient_ratio, qfl, regression_loss,
                     set_prediction_loss)
from .roi_features import FeatureMap, assign_level, frf_roi_align, qde_fuse, roi_align

__all__ = [
    "BACKEND", "AssignmentResult", "CostMatrix", "build_cost_matrix", "center_prior_candidates",
    "center_prior_match", "hungarian", "FeaturePyramid", "QuerySet", "build_pyramid",
    "count_queries", "decode_boxes", "make_query_set", "DqrConfig", "cascade_select",
    "class_agnostic_nms", "topk_by_score", "FormatError", "ValidationError", "DetectionRecord",
    "MetricReport", "average_precision", "recall_at", "Box", "BoxList", "convert", "giou", "iou",
    "pairwise_iou", "LossBreakdown", "bce", "duplicate_gradient_ratio", "qfl", "regression_loss",
    "set_prediction_loss", "FeatureMap", "assign_level", "frf_roi_align", "qde_fuse", "roi_align",
]
