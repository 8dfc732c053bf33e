"""Split conformal calibration of box coordinates.

Each matched (truth, prediction) pair yields a four-component
nonconformity score, one per box edge. The margins are per-edge
conformal quantiles at level ``1 - alpha / 4`` (Bonferroni split of the
error budget over the four edges), and conformal boxes are the predictions
grown outward by those margins.
"""

from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .geometry import Box, clamp
from .pairing import MatchedPair

logger = logging.getLogger(__name__)

COORDINATES = ("x_min", "y_min", "x_max", "y_max")

# (n + 1) * level is computed in floating point; an exact integer product
# may land a few ulps above the integer and push the rank up by one.
_RANK_TOL = 1e-9


class ScoreMode(str, enum.Enum):
    ADDITIVE = "additive"
    MULTIPLICATIVE = "multiplicative"


class DegenerateBoxError(ValueError):
    """Multiplicative scoring or conformalization of a zero-width/height box."""


class UnboundedMarginsError(ValueError):
    """Margins whose conformal rank exceeded the number of calibration boxes."""


class ScoreVector(NamedTuple):
    r_xmin: float
    r_ymin: float
    r_xmax: float
    r_ymax: float


@dataclass(frozen=True)
class MarginSet:
    """Calibrated per-edge margins.

    ``q_*`` are in pixels for additive mode and in fractions of the predicted
    width/height for multiplicative mode. An unbounded set carries
    ``inf`` for every edge whose rank overflowed.
    """

    q_xmin: float
    q_ymin: float
    q_xmax: float
    q_ymax: float
    alpha: float
    mode: ScoreMode
    n_box: int
    iou_threshold: float = 0.5
    unbounded: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mode", ScoreMode(self.mode))
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.unbounded and not all(math.isfinite(q) for q in self.q):
            raise ValueError("bounded margins must be finite")

    @property
    def q(self) -> tuple[float, float, float, float]:
        return (self.q_xmin, self.q_ymin, self.q_xmax, self.q_ymax)

    @property
    def level(self) -> float:
        return 1.0 - self.alpha / 4.0

    @classmethod
    def zeros(cls, mode=ScoreMode.ADDITIVE, alpha: float = 0.1, n_box: int = 1,
              iou_threshold: float = 0.5) -> "MarginSet":
        return cls(0.0, 0.0, 0.0, 0.0, alpha, mode, n_box, iou_threshold)

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "mode": self.mode.value,
            "n_box": self.n_box,
            "iou_threshold": self.iou_threshold,
            "q": {c: (q if math.isfinite(q) else None) for c, q in zip(COORDINATES, self.q)},
            "unbounded": self.unbounded,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "MarginSet":
        try:
            q = [doc["q"][c] for c in COORDINATES]
            q = [math.inf if v is None else float(v) for v in q]
            return cls(*q, alpha=float(doc["alpha"]), mode=ScoreMode(doc["mode"]),
                       n_box=int(doc["n_box"]), iou_threshold=float(doc["iou_threshold"]),
                       unbounded=bool(doc["unbounded"]))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed margins document: {exc}") from exc


def _sizes(box: Box, mode: ScoreMode, what: str) -> tuple[float, float]:
    if mode is ScoreMode.ADDITIVE:
        return 1.0, 1.0
    if not (box.width > 0 and box.height > 0):
        raise DegenerateBoxError(f"{what}: prediction {tuple(box)} has zero width or height")
    return box.width, box.height


def score(pair: MatchedPair, mode: ScoreMode | str) -> ScoreVector:
    """Signed per-edge residuals; positive means the truth sticks out."""
    mode = ScoreMode(mode)
    t, p = pair.truth, pair.prediction
    w, h = _sizes(p, mode, f"pair on image {pair.image_id!r}")
    return ScoreVector(
        (p.x_min - t.x_min) / w,
        (p.y_min - t.y_min) / h,
        (t.x_max - p.x_max) / w,
        (t.y_max - p.y_max) / h,
    )


def score_matrix(pairs: Sequence[MatchedPair], mode: ScoreMode | str) -> np.ndarray:
    """Scores of many pairs as an ``(n, 4)`` array."""
    mode = ScoreMode(mode)
    out = np.empty((len(pairs), 4))
    for i, pair in enumerate(pairs):
        out[i] = score(pair, mode)
    return out


def conformal_rank(n: int, level: float) -> int:
    """1-based rank ``ceil((n + 1) * level)`` of the conformal order statistic."""
    return math.ceil((n + 1) * level - _RANK_TOL)


def conformal_quantile(scores: Sequence[float], level: float) -> float:
    """The ``ceil((n + 1) * level)``-th smallest score, or ``inf`` past ``n``.

    Parameters
    ----------
    scores : sequence of float
        Calibration scores; may be empty. Ties are kept.
    level : float
        Target level in (0, 1).

    Returns
    -------
    float
        The order statistic, or ``math.inf`` when the rank exceeds the
        number of scores (no finite margin achieves the level).
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    arr = np.asarray(scores, dtype=float).ravel()
    k = conformal_rank(arr.size, level)
    if k > arr.size:
        return math.inf
    return float(np.partition(arr, k - 1)[k - 1])


def calibrate(pairs: Sequence[MatchedPair], alpha: float, mode: ScoreMode | str,
              iou_threshold: float = 0.5) -> MarginSet:
    """Per-edge margins from calibration pairs, pooled over images."""
    mode = ScoreMode(mode)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    level = 1.0 - alpha / 4.0
    if len(pairs) == 0:
        warnings.warn("no calibration pairs: margins are unbounded", stacklevel=2)
        return MarginSet(math.inf, math.inf, math.inf, math.inf, alpha, mode, 0,
                         iou_threshold, unbounded=True)
    scores = score_matrix(pairs, mode)
    q = [conformal_quantile(scores[:, c], level) for c in range(4)]
    unbounded = not all(math.isfinite(v) for v in q)
    if unbounded:
        logger.warning("rank %d exceeds n_box=%d; margins unbounded",
                       conformal_rank(len(pairs), level), len(pairs))
    return MarginSet(*q, alpha=alpha, mode=mode, n_box=len(pairs),
                     iou_threshold=iou_threshold, unbounded=unbounded)


def min_calibration_size(alpha: float) -> int:
    """Smallest ``n_box`` for which the margins at ``alpha`` are finite."""
    level = 1.0 - alpha / 4.0
    n = 1
    while conformal_rank(n, level) > n:
        n += 1
    return n


def conformalize(prediction: Box, margins: MarginSet, frame: Box | None = None) -> Box:
    """Grow ``prediction`` by the calibrated margins.

    Negative margins shrink the box; an edge pair that would cross
    collapses to its midpoint. With ``frame`` given, the result is clipped
    to it.
    """
    if margins.unbounded:
        raise UnboundedMarginsError(
            f"margins are unbounded (n_box={margins.n_box}, alpha={margins.alpha}); "
            f"use at least {min_calibration_size(margins.alpha)} calibration boxes "
            "or a larger alpha")
    w, h = _sizes(prediction, margins.mode, "conformalize")
    x_min = prediction.x_min - w * margins.q_xmin
    y_min = prediction.y_min - h * margins.q_ymin
    x_max = prediction.x_max + w * margins.q_xmax
    y_max = prediction.y_max + h * margins.q_ymax
    if x_min > x_max:
        x_min = x_max = 0.5 * (x_min + x_max)
    if y_min > y_max:
        y_min = y_max = 0.5 * (y_min + y_max)
    out = Box(x_min, y_min, x_max, y_max)
    return clamp(out, frame) if frame is not None else out
