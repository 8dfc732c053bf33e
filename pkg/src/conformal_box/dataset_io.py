"""COCO-style ground truth / detection loading and dataset splits."""

from __future__ import annotations

import json
import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Hashable, Iterator, Sequence

import numpy as np

from .geometry import Box, clamp

logger = logging.getLogger(__name__)

SPLIT_LABELS = ("validation", "calibration", "test")


class DatasetFormatError(ValueError):
    """Structural or value problem in an annotation / results file."""


@dataclass(frozen=True)
class GroundTruthRecord:
    image_id: Hashable
    boxes: tuple[Box, ...]
    image_width: int
    image_height: int
    file_name: str | None = None

    @property
    def frame(self) -> Box:
        return Box(0.0, 0.0, float(self.image_width), float(self.image_height))


@dataclass(frozen=True)
class PredictionRecord:
    image_id: Hashable
    boxes: tuple[tuple[Box, float], ...] = ()


class _RecordMap(Mapping):
    def __init__(self, records: dict):
        self.records = records

    def __getitem__(self, key):
        return self.records[key]

    def __iter__(self):
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def __eq__(self, other):
        if isinstance(other, _RecordMap):
            return type(self) is type(other) and self.__dict__ == other.__dict__
        return NotImplemented

    __hash__ = None


class GroundTruthSet(_RecordMap):
    """Mapping ``image_id -> GroundTruthRecord`` with load-time bookkeeping.

    ``n_rejected`` counts annotations dropped for non-positive width or
    height (before or after clamping to the image).
    """

    def __init__(self, records: dict, n_rejected: int = 0, category_id: int | None = None):
        super().__init__(records)
        self.n_rejected = n_rejected
        self.category_id = category_id


class PredictionSet(_RecordMap):
    """Mapping ``image_id -> PredictionRecord``; records the score floor used."""

    def __init__(self, records: dict, score_floor: float = 0.0, n_below_floor: int = 0,
                 category_id: int | None = None):
        super().__init__(records)
        self.score_floor = score_floor
        self.n_below_floor = n_below_floor
        self.category_id = category_id


@dataclass(frozen=True)
class DetectionDataset:
    """Ground truth joined with predictions on ``image_id``."""

    records: tuple[tuple[GroundTruthRecord, PredictionRecord], ...]
    split_label: str | None = None

    def __post_init__(self):
        if self.split_label is not None and self.split_label not in SPLIT_LABELS:
            raise ValueError(f"unknown split label {self.split_label!r}")
        seen = set()
        for gt, pred in self.records:
            if gt.image_id != pred.image_id:
                raise DatasetFormatError(
                    f"record join mismatch: {gt.image_id!r} vs {pred.image_id!r}")
            if gt.image_id in seen:
                raise DatasetFormatError(f"duplicated image_id {gt.image_id!r}")
            seen.add(gt.image_id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[tuple[GroundTruthRecord, PredictionRecord]]:
        return iter(self.records)

    @property
    def image_ids(self) -> list:
        return [gt.image_id for gt, _ in self.records]

    @property
    def n_truths(self) -> int:
        return sum(len(gt.boxes) for gt, _ in self.records)

    @property
    def n_predictions(self) -> int:
        return sum(len(p.boxes) for _, p in self.records)

    def frames(self) -> dict:
        return {gt.image_id: gt.frame for gt, _ in self.records}

    def ground_truth(self) -> GroundTruthSet:
        return GroundTruthSet({gt.image_id: gt for gt, _ in self.records})

    def predictions(self) -> PredictionSet:
        return PredictionSet({p.image_id: p for _, p in self.records})


def _read_json(path) -> Any:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(
            f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc


def _parse_bbox(raw, where: str) -> tuple[float, float, float, float]:
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise DatasetFormatError(f"{where}: bbox must be [x, y, w, h], got {raw!r}")
    try:
        x, y, w, h = (float(v) for v in raw)
    except (TypeError, ValueError) as exc:
        raise DatasetFormatError(f"{where}: non-numeric bbox {raw!r}") from exc
    if not all(math.isfinite(v) for v in (x, y, w, h)):
        raise DatasetFormatError(f"{where}: non-finite bbox {raw!r}")
    return x, y, w, h


def parse_ground_truth(doc: Mapping, category_id: int | None = None,
                       source: str = "<memory>") -> GroundTruthSet:
    """Build a :class:`GroundTruthSet` from an in-memory COCO annotation dict."""
    try:
        images = doc["images"]
        annotations = doc.get("annotations", [])
    except (KeyError, TypeError, AttributeError) as exc:
        raise DatasetFormatError(f"{source}: expected an object with an 'images' list") from exc

    meta = {}
    for img in images:
        try:
            image_id = img["id"]
            width, height = int(img["width"]), int(img["height"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetFormatError(f"{source}: image entry {img!r} lacks id/width/height") from exc
        if width <= 0 or height <= 0:
            raise DatasetFormatError(f"{source}: image {image_id!r} has non-positive size")
        if image_id in meta:
            raise DatasetFormatError(f"{source}: duplicated image id {image_id!r}")
        meta[image_id] = (width, height, img.get("file_name"))

    boxes: dict[Any, list[Box]] = {k: [] for k in meta}
    n_rejected = 0
    for i, ann in enumerate(annotations):
        where = f"{source}: annotation #{i}"
        if "image_id" not in ann or "bbox" not in ann:
            raise DatasetFormatError(f"{where} lacks image_id or bbox")
        image_id = ann["image_id"]
        if image_id not in meta:
            raise DatasetFormatError(f"{where} references unknown image_id {image_id!r}")
        if category_id is not None and ann.get("category_id") != category_id:
            continue
        x, y, w, h = _parse_bbox(ann["bbox"], where)
        if w <= 0 or h <= 0:
            n_rejected += 1
            continue
        width, height, _ = meta[image_id]
        b = clamp(Box.from_xywh(x, y, w, h), Box(0.0, 0.0, float(width), float(height)))
        if b.width <= 0 or b.height <= 0:
            n_rejected += 1
            continue
        boxes[image_id].append(b)

    if n_rejected:
        logger.warning("%s: rejected %d degenerate annotation(s)", source, n_rejected)
    records = {
        k: GroundTruthRecord(k, tuple(boxes[k]), w, h, fn) for k, (w, h, fn) in meta.items()
    }
    return GroundTruthSet(records, n_rejected=n_rejected, category_id=category_id)


def load_ground_truth(path, category_id: int | None = None) -> GroundTruthSet:
    """Load a COCO annotation file.

    ``bbox = [x, y, w, h]`` becomes ``Box(x, y, x + w, y + h)``, clipped to the
    image. Annotations with ``w <= 0`` or ``h <= 0`` are dropped and counted in
    ``n_rejected``. With ``category_id`` set, other categories are ignored.
    """
    return parse_ground_truth(_read_json(path), category_id=category_id, source=str(path))


def parse_predictions(entries: Sequence[Mapping], ground_truth: Mapping,
                      score_floor: float = 0.0, category_id: int | None = None,
                      source: str = "<memory>") -> PredictionSet:
    if not isinstance(entries, list):
        raise DatasetFormatError(f"{source}: results file must be a JSON list")
    grouped: dict[Any, list[tuple[Box, float]]] = {k: [] for k in ground_truth}
    n_below = 0
    for i, det in enumerate(entries):
        where = f"{source}: detection #{i}"
        try:
            image_id, raw_bbox, score = det["image_id"], det["bbox"], det["score"]
        except (KeyError, TypeError) as exc:
            raise DatasetFormatError(f"{where} lacks image_id, bbox or score") from exc
        if image_id not in ground_truth:
            raise DatasetFormatError(f"{where} references unknown image_id {image_id!r}")
        try:
            score = float(score)
        except (TypeError, ValueError) as exc:
            raise DatasetFormatError(f"{where}: non-numeric score {score!r}") from exc
        if not 0.0 <= score <= 1.0:
            raise DatasetFormatError(f"{where}: score {score} outside [0, 1]")
        if category_id is not None and det.get("category_id") != category_id:
            continue
        x, y, w, h = _parse_bbox(raw_bbox, where)
        if w < 0 or h < 0:
            raise DatasetFormatError(f"{where}: negative bbox size {raw_bbox!r}")
        if score < score_floor:
            n_below += 1
            continue
        grouped[image_id].append((Box.from_xywh(x, y, w, h), score))
    records = {k: PredictionRecord(k, tuple(v)) for k, v in grouped.items()}
    return PredictionSet(records, score_floor=score_floor, n_below_floor=n_below,
                         category_id=category_id)


def load_predictions(path, ground_truth: Mapping, score_floor: float = 0.0,
                     category_id: int | None = None) -> PredictionSet:
    """Load a COCO results file (list of ``{image_id, bbox, score}``).

    Detections scoring below ``score_floor`` are dropped; the floor and the
    number dropped are kept on the returned :class:`PredictionSet`.
    """
    return parse_predictions(_read_json(path), ground_truth, score_floor=score_floor,
                             category_id=category_id, source=str(path))


def join(ground_truth: Mapping, predictions: Mapping,
         split_label: str | None = None) -> DetectionDataset:
    """Join ground truth and predictions on image_id, in ground-truth order.

    Images without detections get an empty :class:`PredictionRecord`.
    """
    orphans = [k for k in predictions if k not in ground_truth]
    if orphans:
        raise DatasetFormatError(f"predictions reference unknown image ids {orphans[:5]!r}")
    records = tuple(
        (gt, predictions.get(k, PredictionRecord(k))) for k, gt in ground_truth.items()
    )
    return DetectionDataset(records, split_label)


def split(dataset: DetectionDataset, sizes: tuple[int, int, int],
          seed: int = 0) -> tuple[DetectionDataset, DetectionDataset, DetectionDataset]:
    """Image-level random partition into validation / calibration / test.

    Images are shuffled with a seeded generator and cut in order; images
    beyond ``sum(sizes)`` are left out. Within each part, the original
    record order is preserved.
    """
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) != 3 or any(s < 0 for s in sizes):
        raise ValueError(f"sizes must be three non-negative integers, got {sizes!r}")
    if sum(sizes) > len(dataset):
        raise ValueError(
            f"requested {sum(sizes)} images {sizes} but only {len(dataset)} are available")
    perm = np.random.default_rng(seed).permutation(len(dataset))
    bounds = np.cumsum((0,) + sizes)
    parts = []
    for label, lo, hi in zip(SPLIT_LABELS, bounds[:-1], bounds[1:]):
        idx = np.sort(perm[lo:hi])
        parts.append(DetectionDataset(tuple(dataset.records[i] for i in idx), label))
    return tuple(parts)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _extent(lo: float, hi: float) -> float:
    """Width ``w`` with ``lo + w == hi`` exactly, when one exists nearby."""
    w = hi - lo
    for direction in (math.inf, -math.inf):
        cand = w
        for _ in range(4):
            if lo + cand == hi:
                return cand
            cand = math.nextafter(cand, direction)
    return w


def to_coco_bbox(b: Box) -> list[float]:
    """``[x, y, w, h]`` that reloads to exactly ``b``."""
    return [b.x_min, b.y_min, _extent(b.x_min, b.x_max), _extent(b.y_min, b.y_max)]


def ground_truth_to_coco(ground_truth: Mapping, category_id: int = 1) -> dict:
    """Re-emit ground truth as a COCO annotation dict."""
    images, annotations = [], []
    for k, rec in ground_truth.items():
        img = {"id": k, "width": rec.image_width, "height": rec.image_height}
        if rec.file_name is not None:
            img["file_name"] = rec.file_name
        images.append(img)
        for b in rec.boxes:
            annotations.append({
                "id": len(annotations) + 1, "image_id": k, "category_id": category_id,
                "bbox": to_coco_bbox(b), "area": b.area, "iscrowd": 0,
            })
    return {"images": images, "annotations": annotations,
            "categories": [{"id": category_id, "name": "object"}]}


def predictions_to_coco(predictions: Mapping, category_id: int = 1) -> list[dict]:
    """Re-emit predictions in COCO results format."""
    return [
        {"image_id": k, "category_id": category_id, "bbox": to_coco_bbox(b), "score": s}
        for k, rec in predictions.items() for b, s in rec.boxes
    ]


def dataset_to_json(dataset: DetectionDataset) -> dict:
    """Canonical, lossless dataset document (corner coordinates, no xywh)."""
    return {
        "split_label": dataset.split_label,
        "records": [
            {
                "image_id": gt.image_id,
                "image_width": gt.image_width,
                "image_height": gt.image_height,
                "file_name": gt.file_name,
                "truths": [list(b) for b in gt.boxes],
                "predictions": [{"box": list(b), "score": s} for b, s in pred.boxes],
            }
            for gt, pred in dataset.records
        ],
    }


def dataset_from_json(doc: Mapping) -> DetectionDataset:
    records = []
    for r in doc["records"]:
        k = r["image_id"]
        gt = GroundTruthRecord(k, tuple(Box(*t) for t in r["truths"]),
                               int(r["image_width"]), int(r["image_height"]), r.get("file_name"))
        pred = PredictionRecord(k, tuple((Box(*p["box"]), float(p["score"]))
                                         for p in r["predictions"]))
        records.append((gt, pred))
    return DetectionDataset(tuple(records), doc.get("split_label"))


def write_json(obj, path) -> None:
    """Deterministic JSON writer used for every artifact."""
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")
