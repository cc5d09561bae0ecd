"""RoIAlign over synthetic feature maps, multi-level fusion, and query fusion.

Feature maps are stored ``(height, width, channels)``. A box in pixels maps
to continuous feature coordinates by ``x / stride - 0.5`` (half-pixel
alignment), so cell ``k`` is centered at coordinate ``k``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._backend import kernels
from .errors import FormatError, ValidationError
from .geometry import as_box_array

DEFAULT_OUT_SIZE = (7, 7)
DEFAULT_SAMPLES = 2
CANONICAL_SIZE = 224.0
CANONICAL_LEVEL = 4
MAP_FORMAT_VERSION = 1


@dataclass(frozen=True)
class FeatureMap:
    level: int
    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ValidationError(f"feature map must be (H, W, C) with positive sizes, got {data.shape}")
        object.__setattr__(self, "data", data)

    @property
    def stride(self) -> int:
        return 2 ** self.level

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def _nondegenerate(box) -> np.ndarray:
    b = as_box_array(box)
    if b.shape[0] != 1:
        raise ValidationError("expected a single box")
    b = b[0]
    if not (b[2] > b[0] and b[3] > b[1]):
        raise ValidationError(f"box {b.tolist()} is degenerate")
    return b


def roi_align(fm: FeatureMap, box, out_size=DEFAULT_OUT_SIZE, samples_per_bin: int = DEFAULT_SAMPLES) -> np.ndarray:
    """Pool ``box`` into an ``(out_h, out_w, C)`` grid.

    Each bin averages ``samples_per_bin**2`` bilinear samples on a regular
    sub-grid; samples beyond the map edge clamp to the border.
    """
    b = _nondegenerate(box)
    out_h, out_w = (int(v) for v in out_size)
    if out_h < 1 or out_w < 1 or samples_per_bin < 1:
        raise ValidationError("out_size and samples_per_bin must be positive")
    s = float(fm.stride)
    return kernels.roi_align(
        fm.data, b[0] / s - 0.5, b[1] / s - 0.5, b[2] / s - 0.5, b[3] / s - 0.5,
        out_h, out_w, int(samples_per_bin),
    )


def assign_level(box, pyramid=None, min_level: int = 3, max_level: int = 7) -> int:
    """FPN scale heuristic ``floor(4 + log2(sqrt(w * h) / 224))``, clamped."""
    if pyramid is not None:
        min_level, max_level = min(pyramid.level_ids), max(pyramid.level_ids)
    b = _nondegenerate(box)
    scale = math.sqrt((b[2] - b[0]) * (b[3] - b[1]))
    lvl = math.floor(CANONICAL_LEVEL + math.log2(scale / CANONICAL_SIZE))
    return int(min(max(lvl, min_level), max_level))


def frf_levels(base: int, window: int = 1, min_level: int = 3, max_level: int = 7) -> list[int]:
    lo, hi = max(base - window, min_level), min(base + window, max_level)
    return list(range(lo, hi + 1))


def frf_roi_align(pyr_maps, box, out_size=DEFAULT_OUT_SIZE, samples_per_bin: int = DEFAULT_SAMPLES,
                  window: int = 1) -> np.ndarray:
    """RoIAlign at the box's own level and its ``window`` neighbors on each
    side (clamped to P3-P7), fused by channel-wise mean."""
    maps = _map_dict(pyr_maps)
    missing = [lvl for lvl in range(3, 8) if lvl not in maps]
    if missing:
        raise ValidationError(f"missing feature maps for levels {missing}")
    channels = {fm.channels for fm in maps.values()}
    if len(channels) != 1:
        raise ValidationError(f"levels disagree on channel count: {sorted(channels)}")
    levels = frf_levels(assign_level(box), window)
    pooled = [roi_align(maps[lvl], box, out_size, samples_per_bin) for lvl in levels]
    return np.mean(pooled, axis=0)


def qde_fuse(query, roi, projection) -> np.ndarray:
    """Average-pool ``roi`` to one C-vector, append it to the d-dim query and
    project back to d dims: ``concat(query, pool(roi)) @ projection``."""
    query = np.asarray(query, dtype=np.float64).reshape(-1)
    roi = np.asarray(roi, dtype=np.float64)
    projection = np.asarray(projection, dtype=np.float64)
    if roi.ndim != 3:
        raise ValidationError(f"roi must be (h, w, C), got shape {roi.shape}")
    d, c = query.shape[0], roi.shape[2]
    if projection.shape != (d + c, d):
        raise ValidationError(f"projection must be ({d + c}, {d}), got {projection.shape}")
    pooled = roi.mean(axis=(0, 1))
    return np.concatenate([query, pooled]) @ projection


def _map_dict(pyr_maps) -> dict[int, FeatureMap]:
    if isinstance(pyr_maps, dict):
        return {int(k): v for k, v in pyr_maps.items()}
    return {fm.level: fm for fm in pyr_maps}


def save_feature_maps(path, maps) -> Path:
    """Write maps as ``.npz`` (arrays ``level_<l>``) or ``.json``.

    JSON layout: ``{"format_version": 1, "maps": [{"level", "shape", "data"}]}``
    with ``data`` the row-major flattened ``(H, W, C)`` values.
    """
    path = Path(path)
    maps = _map_dict(maps)
    if path.suffix == ".json":
        doc = {
            "format_version": MAP_FORMAT_VERSION,
            "maps": [
                {"level": lvl, "shape": list(fm.data.shape), "data": fm.data.ravel().tolist()}
                for lvl, fm in sorted(maps.items())
            ],
        }
        path.write_text(json.dumps(doc))
    else:
        arrays = {f"level_{lvl}": fm.data for lvl, fm in maps.items()}
        with open(path, "wb") as fh:
            np.savez(fh, format_version=np.array(MAP_FORMAT_VERSION), **arrays)
    return path


def load_feature_maps(path) -> dict[int, FeatureMap]:
    path = Path(path)
    try:
        if path.suffix == ".json":
            doc = json.loads(path.read_text())
            _check_version(doc.get("format_version"), path)
            return {
                int(m["level"]): FeatureMap(int(m["level"]), np.asarray(m["data"], dtype=np.float64).reshape(m["shape"]))
                for m in doc["maps"]
            }
        with np.load(path) as npz:
            _check_version(int(npz["format_version"]), path)
            return {
                int(k.split("_")[1]): FeatureMap(int(k.split("_")[1]), npz[k])
                for k in npz.files if k.startswith("level_")
            }
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        if isinstance(exc, (FormatError, ValidationError)):
            raise
        raise FormatError(str(exc), source=str(path)) from exc


def _check_version(version, path):
    if version != MAP_FORMAT_VERSION:
        raise FormatError(f"unsupported feature-map format_version {version!r}", source=str(path))
