"""Coverage, stretch and Average Precision."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np

from .conformal import MarginSet, ScoreMode, UnboundedMarginsError, conformalize, score_matrix
from .dataset_io import DetectionDataset
from .geometry import Box, contains, iou, clamp
from .pairing import MatchedPair

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CoverageReport:
    empirical_coverage: float
    n_pairs: int
    n_covered: int
    stretch: float
    mode: ScoreMode | None
    alpha: float | None
    clamped: bool = False
    n_stretch_excluded: int = 0

    def to_json(self) -> dict:
        d = asdict(self)
        d["mode"] = None if self.mode is None else ScoreMode(self.mode).value
        if math.isnan(d["empirical_coverage"]):
            d["empirical_coverage"] = None
        if math.isnan(d["stretch"]):
            d["stretch"] = None
        return d


@dataclass(frozen=True)
class PrecisionRecallCurve:
    """Per-detection operating points, sorted by decreasing confidence."""

    thresholds: tuple[float, ...]
    precision: tuple[float, ...]
    recall: tuple[float, ...]
    iou_threshold: float
    n_truths: int

    def __len__(self) -> int:
        return len(self.thresholds)

    def to_json(self) -> dict:
        return {"iou_threshold": self.iou_threshold, "n_truths": self.n_truths,
                "points": [{"threshold": t, "precision": p, "recall": r}
                           for t, p, r in zip(self.thresholds, self.precision, self.recall)]}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["threshold", "precision", "recall"])
            for row in zip(self.thresholds, self.precision, self.recall):
                writer.writerow([repr(v) for v in row])

    def area(self) -> float:
        """All-points interpolated area under the precision envelope."""
        if not self.thresholds:
            return 0.0
        rec = np.concatenate(([0.0], self.recall))
        env = np.maximum.accumulate(np.asarray(self.precision)[::-1])[::-1]
        return float(np.sum(np.diff(rec) * env))


def _frame_for(pair: MatchedPair, frames: Mapping | None) -> Box | None:
    if frames is None:
        return None
    return frames[pair.image_id]


def _conformal_boxes(pairs, margins, frames):
    if margins is not None and margins.unbounded:
        raise UnboundedMarginsError("cannot evaluate unbounded margins")
    for pair in pairs:
        frame = _frame_for(pair, frames)
        if margins is None:
            box = pair.prediction if frame is None else clamp(pair.prediction, frame)
        else:
            box = conformalize(pair.prediction, margins, frame)
        yield pair, box


def stretch(pairs: Sequence[MatchedPair], margins: MarginSet | None,
            frames: Mapping | None = None) -> tuple[float, int]:
    """Mean area ratio conformal / predicted, and the number of pairs skipped.

    Pairs whose prediction has zero area cannot form a ratio and are
    excluded. Returns ``nan`` when nothing is left.
    """
    ratios, excluded = [], 0
    for pair, box in _conformal_boxes(pairs, margins, frames):
        a = pair.prediction.area
        if not a > 0:
            excluded += 1
            continue
        ratios.append(1.0 if margins is None else box.area / a)
    if excluded:
        logger.warning("stretch: excluded %d zero-area prediction(s)", excluded)
    return (float(np.mean(ratios)) if ratios else math.nan), excluded


def coverage(test_pairs: Sequence[MatchedPair], margins: MarginSet | None = None,
             frames: Mapping | None = None) -> CoverageReport:
    """Fraction of matched truths entirely inside their (conformal) box.

    With ``margins=None`` the raw predictions are scored and stretch is 1.
    ``frames`` maps image_id to the image frame; when given, boxes are
    clipped to it before the containment test.
    """
    boxes = list(_conformal_boxes(test_pairs, margins, frames))
    n_covered = sum(contains(box, pair.truth) for pair, box in boxes)
    n = len(boxes)
    if margins is None:
        s, excluded = 1.0, 0
    else:
        s, excluded = stretch(test_pairs, margins, frames)
    return CoverageReport(
        empirical_coverage=n_covered / n if n else math.nan,
        n_pairs=n,
        n_covered=n_covered,
        stretch=s,
        mode=None if margins is None else margins.mode,
        alpha=None if margins is None else margins.alpha,
        clamped=frames is not None,
        n_stretch_excluded=excluded,
    )


def coverage_by_scores(test_pairs: Sequence[MatchedPair], margins: MarginSet) -> np.ndarray:
    """Per-pair coverage decided by ``score <= q`` on every edge (no clipping)."""
    if not test_pairs:
        return np.zeros(0, dtype=bool)
    scores = score_matrix(test_pairs, margins.mode)
    return np.all(scores <= np.asarray(margins.q), axis=1)


def precision_recall_curve(dataset: DetectionDataset, iou_threshold: float) -> PrecisionRecallCurve:
    """Sweep all detections by decreasing confidence.

    Each detection is matched to the unmatched truth of its own image with
    the highest IoU, provided that IoU reaches ``iou_threshold``; otherwise
    it is a false positive.
    """
    n_truths = dataset.n_truths
    if n_truths == 0:
        raise ValueError("precision/recall undefined without ground-truth boxes")
    dets = [
        (-conf, i, j, box)
        for i, (_, pred) in enumerate(dataset.records)
        for j, (box, conf) in enumerate(pred.boxes)
    ]
    dets.sort(key=lambda d: d[:3])
    matched = [[False] * len(gt.boxes) for gt, _ in dataset.records]
    thresholds, precision, recall = [], [], []
    tp = 0
    for k, (neg_conf, i, _, box) in enumerate(dets, start=1):
        truths = dataset.records[i][0].boxes
        best, best_iou = -1, iou_threshold
        for m, t in enumerate(truths):
            if matched[i][m]:
                continue
            v = iou(box, t)
            if v >= best_iou and (best < 0 or v > best_iou):
                best, best_iou = m, v
        if best >= 0:
            matched[i][best] = True
            tp += 1
        thresholds.append(-neg_conf)
        precision.append(tp / k)
        recall.append(tp / n_truths)
    return PrecisionRecallCurve(tuple(thresholds), tuple(precision), tuple(recall),
                                iou_threshold, n_truths)


def average_precision(dataset: DetectionDataset, iou_threshold: float = 0.5) -> float:
    """Area under the precision-recall curve (all-points interpolation)."""
    return precision_recall_curve(dataset, iou_threshold).area()
