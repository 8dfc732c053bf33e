"""Greedy confidence-ordered pairing of predictions with ground truth."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

from .dataset_io import DetectionDataset
from .geometry import Box, iou


@dataclass(frozen=True)
class MatchedPair:
    truth: Box
    prediction: Box
    confidence: float
    iou: float
    image_id: Hashable = None


@dataclass(frozen=True)
class MatchReport:
    pairs: tuple[MatchedPair, ...] = ()
    false_positives: tuple[tuple[Box, float], ...] = ()
    false_negatives: tuple[Box, ...] = ()
    threshold: float = 0.5

    def __add__(self, other: "MatchReport") -> "MatchReport":
        if self.threshold != other.threshold:
            raise ValueError("cannot merge reports built with different thresholds")
        return MatchReport(self.pairs + other.pairs,
                           self.false_positives + other.false_positives,
                           self.false_negatives + other.false_negatives,
                           self.threshold)

    @property
    def counts(self) -> dict[str, int]:
        return {"tp": len(self.pairs), "fp": len(self.false_positives),
                "fn": len(self.false_negatives)}

    def to_json(self) -> dict:
        return {
            "threshold": self.threshold,
            "pairs": [
                {"image_id": p.image_id, "truth": list(p.truth), "prediction": list(p.prediction),
                 "confidence": p.confidence, "iou": p.iou}
                for p in self.pairs
            ],
            "false_positives": [{"box": list(b), "confidence": c} for b, c in self.false_positives],
            "false_negatives": [list(b) for b in self.false_negatives],
        }


def confidence_order(confidences: Sequence[float]) -> list[int]:
    """Indices by decreasing confidence, ties broken by input position."""
    return sorted(range(len(confidences)), key=lambda i: (-confidences[i], i))


def match_image(truths: Sequence[Box], predictions: Sequence[tuple[Box, float]],
                iou_threshold: float = 0.5, image_id: Hashable = None) -> MatchReport:
    """Pair ground-truth boxes with detections on one image.

    Truths are visited in input order. For each, the not-yet-assigned
    predictions are tried by decreasing confidence and the first one with
    ``iou >= iou_threshold`` is taken, even if a later one overlaps more.
    Leftover predictions are false positives, leftover truths false
    negatives.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"iou_threshold must lie in (0, 1), got {iou_threshold}")
    order = confidence_order([c for _, c in predictions])
    taken = [False] * len(predictions)
    pairs, misses = [], []
    for t in truths:
        for j in order:
            if taken[j]:
                continue
            box, conf = predictions[j]
            overlap = iou(t, box)
            if overlap >= iou_threshold:
                taken[j] = True
                pairs.append(MatchedPair(t, box, conf, overlap, image_id))
                break
        else:
            misses.append(t)
    fps = tuple(predictions[j] for j in order if not taken[j])
    return MatchReport(tuple(pairs), fps, tuple(misses), iou_threshold)


def match_dataset(dataset: DetectionDataset, iou_threshold: float = 0.5) -> MatchReport:
    """Run :func:`match_image` on every image and merge in record order."""
    pairs, fps, fns = [], [], []
    for gt, pred in dataset:
        r = match_image(gt.boxes, pred.boxes, iou_threshold, gt.image_id)
        pairs.extend(r.pairs)
        fps.extend(r.false_positives)
        fns.extend(r.false_negatives)
    return MatchReport(tuple(pairs), tuple(fps), tuple(fns), iou_threshold)
