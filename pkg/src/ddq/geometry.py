"""Axis-aligned box arithmetic.

Boxes are half-open real rectangles ``(x1, y1, x2, y2)`` in pixels with
area ``(x2 - x1) * (y2 - y1)``; there is no ``+1`` pixel convention.
Zero-area boxes are legal data: their IoU with anything is 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import ValidationError

FORMATS = ("xyxy", "cxcywh")


@dataclass(frozen=True)
class Box:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        vals = (self.x1, self.y1, self.x2, self.y2)
        if not all(np.isfinite(vals)):
            raise ValidationError(f"box has non-finite coordinates: {vals}")
        if self.x2 < self.x1 or self.y2 < self.y1:
            raise ValidationError(f"box corners out of order: {vals}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def degenerate(self) -> bool:
        return not self.area > 0.0

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)

    def clip(self, width: float, height: float) -> "Box":
        return Box(*clip_boxes(self.as_array(), width, height))

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.y1, self.x2, self.y2], dtype=np.float64)

    def __iter__(self):
        return iter((self.x1, self.y1, self.x2, self.y2))


class BoxList:
    """An ``(N, 4)`` corner-form array with an optional parallel score vector."""

    def __init__(self, boxes, scores=None):
        arr = as_box_array(boxes)
        if scores is not None:
            scores = np.asarray(scores, dtype=np.float64).reshape(-1)
            if scores.shape[0] != arr.shape[0]:
                raise ValidationError(
                    f"{arr.shape[0]} boxes but {scores.shape[0]} scores"
                )
            if np.isnan(scores).any():
                raise ValidationError("scores contain NaN")
        self.boxes = arr
        self.scores = scores

    def __len__(self):
        return self.boxes.shape[0]

    def __getitem__(self, idx) -> Box:
        return Box(*self.boxes[idx])

    def __iter__(self):
        for row in self.boxes:
            yield Box(*row)

    def take(self, indices) -> "BoxList":
        indices = np.asarray(indices, dtype=np.intp)
        scores = None if self.scores is None else self.scores[indices]
        return BoxList(self.boxes[indices], scores)

    @property
    def areas(self) -> np.ndarray:
        return box_areas(self.boxes)

    @property
    def degenerate(self) -> np.ndarray:
        return ~(self.areas > 0.0)

    def __repr__(self):
        return f"BoxList(n={len(self)}, scored={self.scores is not None})"


def as_box_array(boxes) -> np.ndarray:
    """Coerce a Box, BoxList or array-like into a validated ``(N, 4)`` array."""
    if isinstance(boxes, BoxList):
        return boxes.boxes
    if isinstance(boxes, Box):
        return boxes.as_array()[None, :]
    arr = np.asarray(boxes, dtype=np.float64)
    if arr.size == 0:
        return np.zeros((0, 4), dtype=np.float64)
    arr = arr.reshape(-1, 4)
    if not np.isfinite(arr).all():
        raise ValidationError("boxes contain NaN or infinite coordinates")
    if (arr[:, 2] < arr[:, 0]).any() or (arr[:, 3] < arr[:, 1]).any():
        raise ValidationError("boxes must satisfy x1 <= x2 and y1 <= y2")
    return np.ascontiguousarray(arr)


def _single(box) -> np.ndarray:
    arr = as_box_array(box)
    if arr.shape[0] != 1:
        raise ValidationError(f"expected a single box, got {arr.shape[0]}")
    return arr


def box_areas(boxes) -> np.ndarray:
    b = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    return (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])


def clip_boxes(boxes, width: float, height: float) -> np.ndarray:
    b = np.array(boxes, dtype=np.float64)
    b[..., 0::2] = np.clip(b[..., 0::2], 0.0, width)
    b[..., 1::2] = np.clip(b[..., 1::2], 0.0, height)
    return b


def iou(a, b) -> float:
    """Intersection over union of two boxes; 0 when the union is empty."""
    return float(kernels.pairwise_iou(_single(a), _single(b))[0, 0])


def pairwise_iou(a, b) -> np.ndarray:
    """``|A| x |B|`` matrix with entry ``(i, j) = iou(A[i], B[j])``."""
    return kernels.pairwise_iou(as_box_array(a), as_box_array(b))


def pairwise_giou(a, b) -> np.ndarray:
    a = as_box_array(a)
    b = as_box_array(b)
    ious = kernels.pairwise_iou(a, b)
    area_a = box_areas(a)
    area_b = box_areas(b)
    ew = np.maximum(a[:, None, 2], b[None, :, 2]) - np.minimum(a[:, None, 0], b[None, :, 0])
    eh = np.maximum(a[:, None, 3], b[None, :, 3]) - np.minimum(a[:, None, 1], b[None, :, 1])
    enclosing = ew * eh
    if (enclosing <= 0.0).any():
        raise ValidationError("giou undefined: both boxes degenerate with empty enclosing box")
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.maximum(iw, 0.0) * np.maximum(ih, 0.0)
    union = area_a[:, None] + area_b[None, :] - inter
    return ious - (enclosing - union) / enclosing


def giou(a, b) -> float:
    """Generalized IoU: ``iou - (enclosing - union) / enclosing``, in [-1, 1]."""
    a = _single(a)
    b = _single(b)
    if box_areas(a)[0] <= 0.0 and box_areas(b)[0] <= 0.0:
        raise ValidationError("giou undefined for two degenerate boxes")
    return float(pairwise_giou(a, b)[0, 0])


def convert(box, from_format: str, to_format: str) -> np.ndarray:
    """Convert boxes between corner (``xyxy``) and center (``cxcywh``) form.

    Works on a single 4-vector or an ``(N, 4)`` array; the shape is kept.
    """
    for fmt in (from_format, to_format):
        if fmt not in FORMATS:
            raise ValidationError(f"unknown box format {fmt!r}; expected one of {FORMATS}")
    arr = np.asarray(box, dtype=np.float64)
    if arr.shape[-1] != 4:
        raise ValidationError(f"boxes need 4 coordinates, got shape {arr.shape}")
    if np.isnan(arr).any():
        raise ValidationError("box contains NaN")
    if from_format == to_format:
        return arr.copy()
    a, b, c, d = np.moveaxis(arr, -1, 0)
    if from_format == "xyxy":
        out = ((a + c) / 2.0, (b + d) / 2.0, c - a, d - b)
    else:
        out = (a - c / 2.0, b - d / 2.0, a + c / 2.0, b + d / 2.0)
    return np.stack(out, axis=-1)

