"""Dense per-point query priors over a P3-P7 feature pyramid.

Every grid point on every level is one query. A level ``l`` grid is the
image downsampled by ``2**l`` (rounded up), and point ``(i, j)`` sits at the
cell center ``((j + 0.5) * 2**l, (i + 0.5) * 2**l)``. Points are numbered
row-major within a level and levels are concatenated low to high.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ValidationError
from .geometry import BoxList, as_box_array, clip_boxes

LEVELS = (3, 4, 5, 6, 7)
DEFAULT_FEATURE_DIM = 256
# provenance tags for how a query's feature vector was formed
FEATURE_SOURCES = ("cls&reg", "share conv", "FPN", "None", "synthetic")


@dataclass(frozen=True)
class PyramidLevel:
    level: int
    stride: int
    grid_w: int
    grid_h: int

    @property
    def num_points(self) -> int:
        return self.grid_w * self.grid_h


@dataclass(frozen=True)
class FeaturePyramid:
    image_w: int
    image_h: int
    levels: tuple[PyramidLevel, ...]

    @property
    def level_ids(self) -> tuple[int, ...]:
        return tuple(lv.level for lv in self.levels)

    def level(self, level: int) -> PyramidLevel:
        for lv in self.levels:
            if lv.level == level:
                return lv
        raise ValidationError(f"level {level} not in pyramid {self.level_ids}")

    @cached_property
    def offsets(self) -> dict[int, int]:
        """First global point index of each level."""
        out, start = {}, 0
        for lv in self.levels:
            out[lv.level] = start
            start += lv.num_points
        return out

    @property
    def num_points(self) -> int:
        return sum(lv.num_points for lv in self.levels)

    def level_points(self, level: int) -> np.ndarray:
        """``(grid_h * grid_w, 2)`` pixel coordinates of one level, row-major."""
        lv = self.level(level)
        xs = (np.arange(lv.grid_w) + 0.5) * lv.stride
        ys = (np.arange(lv.grid_h) + 0.5) * lv.stride
        gx, gy = np.meshgrid(xs, ys)
        return np.stack([gx.ravel(), gy.ravel()], axis=1)

    @cached_property
    def points(self) -> np.ndarray:
        return np.concatenate([self.level_points(lv.level) for lv in self.levels])

    @cached_property
    def point_levels(self) -> np.ndarray:
        return np.concatenate(
            [np.full(lv.num_points, lv.level, dtype=np.int64) for lv in self.levels]
        )

    @cached_property
    def point_indices(self) -> np.ndarray:
        """Index of each global point within its own level."""
        return np.concatenate([np.arange(lv.num_points, dtype=np.int64) for lv in self.levels])

    def global_index(self, levels, indices) -> np.ndarray:
        levels = np.asarray(levels, dtype=np.int64)
        indices = np.asarray(indices, dtype=np.int64)
        starts = np.zeros_like(levels)
        for lv in self.levels:
            sel = levels == lv.level
            if np.any(indices[sel] >= lv.num_points) or np.any(indices[sel] < 0):
                raise ValidationError(f"grid index out of range on level {lv.level}")
            starts[sel] = self.offsets[lv.level]
        known = np.isin(levels, self.level_ids)
        if not known.all():
            raise ValidationError(f"unknown levels {sorted(set(levels[~known].tolist()))}")
        return starts + indices


def build_pyramid(image_w: int, image_h: int, levels=LEVELS) -> FeaturePyramid:
    if image_w < 1 or image_h < 1:
        raise ValidationError(f"image size must be positive, got {image_w}x{image_h}")
    out = []
    for lvl in levels:
        stride = 2 ** lvl
        out.append(PyramidLevel(lvl, stride, math.ceil(image_w / stride), math.ceil(image_h / stride)))
    return FeaturePyramid(int(image_w), int(image_h), tuple(out))


def count_queries(pyramid: FeaturePyramid) -> int:
    return pyramid.num_points


def decode_boxes(pyramid: FeaturePyramid, offsets) -> BoxList:
    """Turn per-point ``(left, top, right, bottom)`` pixel distances into
    boxes around each point, clipped to the image."""
    offsets = np.asarray(offsets, dtype=np.float64)
    if offsets.ndim != 2 or offsets.shape[1] != 4:
        raise ValidationError(f"offsets must have shape (N, 4), got {offsets.shape}")
    if offsets.shape[0] != pyramid.num_points:
        raise ValidationError(
            f"{offsets.shape[0]} offsets for {pyramid.num_points} pyramid points"
        )
    if not np.isfinite(offsets).all() or (offsets < 0).any():
        raise ValidationError("offsets must be finite and non-negative")
    pts = pyramid.points
    boxes = np.stack(
        [pts[:, 0] - offsets[:, 0], pts[:, 1] - offsets[:, 1],
         pts[:, 0] + offsets[:, 2], pts[:, 1] + offsets[:, 3]],
        axis=1,
    )
    return BoxList(clip_boxes(boxes, pyramid.image_w, pyramid.image_h))


@dataclass
class QuerySet:
    """Parallel arrays describing N queries.

    ``levels`` and ``indices`` tag the pyramid point each query came from;
    several queries may share an origin.
    """

    boxes: np.ndarray
    scores: np.ndarray
    features: np.ndarray
    levels: np.ndarray
    indices: np.ndarray
    feature_source: str = "synthetic"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.boxes = as_box_array(self.boxes)
        n = self.boxes.shape[0]
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.size == 0 and feats.ndim < 2:
            feats = feats.reshape(n, 0)
        self.features = feats
        self.levels = np.asarray(self.levels, dtype=np.int64).reshape(-1)
        self.indices = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        if self.features.ndim != 2:
            raise ValidationError("features must be a 2-D (N, d) array")
        lengths = {
            "scores": self.scores.shape[0],
            "features": self.features.shape[0],
            "levels": self.levels.shape[0],
            "indices": self.indices.shape[0],
        }
        bad = {k: v for k, v in lengths.items() if v != n}
        if bad:
            raise ValidationError(f"{n} boxes but mismatched lengths {bad}")
        if np.isnan(self.scores).any() or (self.scores < 0).any() or (self.scores > 1).any():
            raise ValidationError("query scores must lie in [0, 1]")
        if self.feature_source not in FEATURE_SOURCES:
            raise ValidationError(f"unknown feature source {self.feature_source!r}")

    def __len__(self):
        return self.boxes.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def box_list(self) -> BoxList:
        return BoxList(self.boxes, self.scores)

    def take(self, indices) -> "QuerySet":
        idx = np.asarray(indices, dtype=np.intp)
        return QuerySet(
            self.boxes[idx], self.scores[idx], self.features[idx],
            self.levels[idx], self.indices[idx], self.feature_source, dict(self.meta),
        )

    def with_scores(self, scores) -> "QuerySet":
        return QuerySet(
            self.boxes, scores, self.features, self.levels, self.indices,
            self.feature_source, dict(self.meta),
        )

    def to_records(self) -> list[dict]:
        return [
            {
                "box": [float(v) for v in self.boxes[i]],
                "score": float(self.scores[i]),
                "level": int(self.levels[i]),
                "index": int(self.indices[i]),
                "feature": [float(v) for v in self.features[i]],
            }
            for i in range(len(self))
        ]

    @classmethod
    def from_records(cls, records, feature_source="synthetic") -> "QuerySet":
        records = list(records)
        if not records:
            return cls(np.zeros((0, 4)), [], np.zeros((0, 0)), [], [], feature_source)
        dims = {len(r.get("feature", [])) for r in records}
        if len(dims) != 1:
            raise ValidationError(f"inconsistent feature dimensions {sorted(dims)}")
        return cls(
            np.array([r["box"] for r in records], dtype=np.float64),
            [r["score"] for r in records],
            np.array([r.get("feature", []) for r in records], dtype=np.float64).reshape(len(records), -1),
            [r["level"] for r in records],
            [r["index"] for r in records],
            feature_source,
        )


def make_query_set(pyramid: FeaturePyramid, scores, offsets, features=None,
                   feature_dim: int = DEFAULT_FEATURE_DIM,
                   feature_source: str = "synthetic") -> QuerySet:
    """One query per pyramid point from per-point scores, edge offsets and
    features. Missing features become zero vectors of ``feature_dim``."""
    n = pyramid.num_points
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if scores.shape[0] != n:
        raise ValidationError(f"{scores.shape[0]} scores for {n} pyramid points")
    if features is None:
        features = np.zeros((n, feature_dim))
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] != n:
        raise ValidationError(f"features must have shape ({n}, d), got {features.shape}")
    boxes = decode_boxes(pyramid, offsets).boxes
    return QuerySet(
        boxes, scores, features, pyramid.point_levels.copy(),
        pyramid.point_indices.copy(), feature_source,
    )
