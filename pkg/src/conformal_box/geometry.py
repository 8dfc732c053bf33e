"""Axis-aligned box arithmetic.

Boxes are stored as ``(x_min, y_min, x_max, y_max)`` in real-valued pixel
coordinates. All functions are pure and operate on immutable values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np


@dataclass(frozen=True, slots=True)
class Box:
    """Axis-aligned rectangle ``(x_min, y_min, x_max, y_max)``."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        # `not <=` also rejects NaN coordinates
        if not (self.x_min <= self.x_max and self.y_min <= self.y_max):
            raise ValueError(f"invalid box coordinates {tuple(self)}")

    def __iter__(self) -> Iterator[float]:
        yield self.x_min
        yield self.y_min
        yield self.x_max
        yield self.y_max

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @classmethod
    def from_xywh(cls, x: float, y: float, w: float, h: float) -> "Box":
        """Build a box from COCO ``[x, y, width, height]``."""
        return cls(float(x), float(y), float(x + w), float(y + h))

    def to_xywh(self) -> list[float]:
        return [self.x_min, self.y_min, self.width, self.height]

    def scaled(self, s: float) -> "Box":
        return Box(self.x_min * s, self.y_min * s, self.x_max * s, self.y_max * s)


def area(b: Box) -> float:
    return b.area


def intersection(a: Box, b: Box) -> float:
    """Area of the overlap of two boxes (0 when disjoint)."""
    w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if w <= 0 or h <= 0:
        return 0.0
    return w * h


def iou(a: Box, b: Box) -> float:
    """Intersection over union; 0 when the union has zero area."""
    inter = intersection(a, b)
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union


def contains(outer: Box, inner: Box) -> bool:
    """True iff ``inner`` lies entirely inside ``outer`` (borders included)."""
    return (
        outer.x_min <= inner.x_min
        and outer.y_min <= inner.y_min
        and outer.x_max >= inner.x_max
        and outer.y_max >= inner.y_max
    )


def clamp(b: Box, frame: Box) -> Box:
    """Clip every coordinate of ``b`` into ``frame``.

    A box lying completely outside the frame collapses onto the nearest
    frame edge, so the result is always a valid (possibly zero-area) box.
    """
    x_min = min(max(b.x_min, frame.x_min), frame.x_max)
    y_min = min(max(b.y_min, frame.y_min), frame.y_max)
    x_max = min(max(b.x_max, frame.x_min), frame.x_max)
    y_max = min(max(b.y_max, frame.y_min), frame.y_max)
    return Box(x_min, y_min, x_max, y_max)


def iou_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two ``(n, 4)`` and ``(m, 4)`` xyxy arrays."""
    a = np.asarray(boxes_a, dtype=float).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=float).reshape(-1, 4)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out
