"""File formats read and written by the CLI.

Box files (``nms``)
    JSON, any of::

        [{"box": [x1, y1, x2, y2], "score": s, ...}, ...]
        {"boxes": [[x1, y1, x2, y2], ...], "scores": [s, ...]}

    or CSV with header ``x1,y1,x2,y2,score``.

Query files (``assign``)
    ``{"image_size": [W, H], "queries": [{"box", "score", "level", "index", "feature"}]}``

Ground-truth files (``assign``)
    ``{"boxes": [[x1, y1, x2, y2], ...]}`` or a bare list of corner boxes.

COCO files (``eval``)
    detections: ``[{"image_id", "bbox": [x, y, w, h], "score"}]``;
    ground truth: the same list without scores, or a COCO document with
    ``images`` and ``annotations``.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .dense_queries import QuerySet
from .errors import FormatError, ValidationError
from .evaluation import DetectionRecord
from .geometry import as_box_array

BOX_FIELDS = ("x1", "y1", "x2", "y2")


def read_json(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FormatError(f"cannot read file: {exc.strerror}", source=str(path)) from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(exc.msg, source=str(path), line=exc.lineno) from exc


def write_json(path, doc):
    text = json.dumps(doc, indent=2, sort_keys=False) + "\n"
    if path is None or str(path) == "-":
        print(text, end="")
    else:
        Path(path).write_text(text)


def _number(value, where, source):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise FormatError(f"{where}: expected a number, got {value!r}", source=source)
    return float(value)


def _box(value, where, source, fmt="xyxy"):
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        raise FormatError(f"{where}: box must be a list of 4 numbers", source=source)
    vals = [_number(v, where, source) for v in value]
    if fmt == "xywh":
        x, y, w, h = vals
        vals = [x, y, x + w, y + h]
    if vals[2] < vals[0] or vals[3] < vals[1]:
        raise FormatError(f"{where}: box corners out of order {value}", source=source)
    return vals


def read_boxes(path) -> tuple[np.ndarray, np.ndarray | None, list | None]:
    """``(boxes, scores, records)``; ``records`` holds the raw JSON records
    when the input was a record list, so survivors can be echoed verbatim."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return _read_boxes_csv(path)
    doc = read_json(path)
    src = str(path)
    if isinstance(doc, dict) and "boxes" in doc:
        boxes = [_box(b, f"boxes[{i}]", src) for i, b in enumerate(doc["boxes"])]
        scores = doc.get("scores")
        if scores is not None:
            scores = [_number(s, f"scores[{i}]", src) for i, s in enumerate(scores)]
            if len(scores) != len(boxes):
                raise FormatError(f"{len(boxes)} boxes but {len(scores)} scores", source=src)
        return _arr(boxes), None if scores is None else np.asarray(scores), None
    if isinstance(doc, list):
        boxes, scores = [], []
        for i, rec in enumerate(doc):
            if not isinstance(rec, dict) or "box" not in rec:
                raise FormatError(f"record {i}: expected an object with a 'box' field", source=src)
            boxes.append(_box(rec["box"], f"record {i}", src))
            if "score" in rec:
                scores.append(_number(rec["score"], f"record {i} score", src))
        if scores and len(scores) != len(boxes):
            raise FormatError("either every record or none must carry a score", source=src)
        return _arr(boxes), np.asarray(scores) if scores else None, doc
    raise FormatError("expected a list of box records or an object with 'boxes'", source=src)


def _arr(boxes):
    return np.asarray(boxes, dtype=np.float64).reshape(-1, 4)


def _read_boxes_csv(path):
    src = str(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise FormatError(f"cannot read file: {exc.strerror}", source=src) from exc
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [f for f in BOX_FIELDS if f not in header]
        if missing:
            raise FormatError(f"CSV header missing columns {missing}", source=src, line=1)
        has_score = "score" in header
        boxes, scores = [], []
        for row in reader:
            line = reader.line_num
            try:
                vals = [float(row[f]) for f in BOX_FIELDS]
                if has_score:
                    scores.append(float(row["score"]))
            except (TypeError, ValueError) as exc:
                raise FormatError(f"bad number ({exc})", source=src, line=line) from exc
            if vals[2] < vals[0] or vals[3] < vals[1]:
                raise FormatError(f"box corners out of order {vals}", source=src, line=line)
            boxes.append(vals)
    return _arr(boxes), np.asarray(scores) if has_score else None, None


def read_queries(path, image_size=None) -> QuerySet:
    doc = read_json(path)
    src = str(path)
    if isinstance(doc, dict):
        records = doc.get("queries")
        image_size = doc.get("image_size", image_size)
    else:
        records = doc
    if not isinstance(records, list):
        raise FormatError("expected a 'queries' list", source=src)
    for i, rec in enumerate(records):
        if not isinstance(rec, dict):
            raise FormatError(f"record {i}: expected an object", source=src)
        for key in ("box", "score", "level", "index"):
            if key not in rec:
                raise FormatError(f"record {i}: missing field {key!r}", source=src)
        _box(rec["box"], f"record {i}", src)
        _number(rec["score"], f"record {i} score", src)
    if image_size is None:
        raise FormatError("query file has no image_size and none was given", source=src)
    if not (isinstance(image_size, (list, tuple)) and len(image_size) == 2):
        raise FormatError("image_size must be [W, H]", source=src)
    try:
        q = QuerySet.from_records(records)
    except ValidationError as exc:
        raise FormatError(str(exc), source=src) from exc
    q.meta["image_size"] = (int(image_size[0]), int(image_size[1]))
    return q


def write_queries(path, q: QuerySet):
    write_json(path, {"image_size": list(q.meta.get("image_size", (0, 0))), "queries": q.to_records()})


def read_gt_boxes(path) -> np.ndarray:
    doc = read_json(path)
    src = str(path)
    if isinstance(doc, dict):
        doc = doc.get("boxes")
    if not isinstance(doc, list):
        raise FormatError("expected a list of boxes or an object with 'boxes'", source=src)
    out = []
    for i, item in enumerate(doc):
        if isinstance(item, dict):
            if "box" in item:
                out.append(_box(item["box"], f"record {i}", src))
            elif "bbox" in item:
                out.append(_box(item["bbox"], f"record {i}", src, fmt="xywh"))
            else:
                raise FormatError(f"record {i}: expected 'box' or 'bbox'", source=src)
        else:
            out.append(_box(item, f"record {i}", src))
    return _arr(out)


def read_coco_detections(path) -> list[DetectionRecord]:
    doc = read_json(path)
    src = str(path)
    if isinstance(doc, dict) and "annotations" in doc:
        doc = doc["annotations"]
    if not isinstance(doc, list):
        raise FormatError("expected a list of detection records", source=src)
    errors, out = [], []
    for i, rec in enumerate(doc):
        try:
            if not isinstance(rec, dict):
                raise FormatError("expected an object", source=None)
            for key in ("image_id", "bbox", "score"):
                if key not in rec:
                    raise FormatError(f"missing field {key!r}")
            box = _box(rec["bbox"], "bbox", None, fmt="xywh")
            score = _number(rec["score"], "score", None)
            if not 0.0 <= score <= 1.0:
                raise FormatError(f"score {score} outside [0, 1]")
            out.append(DetectionRecord(tuple(box), score, rec["image_id"]))
        except FormatError as exc:
            errors.append(f"record {i}: {exc}")
    if errors:
        raise FormatError("; ".join(errors), source=src)
    return out


def read_coco_gts(path) -> dict:
    doc = read_json(path)
    src = str(path)
    gts: dict = {}
    if isinstance(doc, dict):
        for img in doc.get("images", []):
            if isinstance(img, dict) and "id" in img:
                gts.setdefault(img["id"], [])
        doc = doc.get("annotations")
    if not isinstance(doc, list):
        raise FormatError("expected a list of annotations or a COCO document", source=src)
    errors = []
    for i, rec in enumerate(doc):
        try:
            if not isinstance(rec, dict) or "image_id" not in rec or "bbox" not in rec:
                raise FormatError("expected an object with 'image_id' and 'bbox'")
            gts.setdefault(rec["image_id"], []).append(_box(rec["bbox"], "bbox", None, fmt="xywh"))
        except FormatError as exc:
            errors.append(f"record {i}: {exc}")
    if errors:
        raise FormatError("; ".join(errors), source=src)
    return {k: as_box_array(v) for k, v in gts.items()}


def format_value(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row.get(c, "")) for c in columns])
