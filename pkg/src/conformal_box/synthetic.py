"""Synthetic i.i.d. detection data and Monte Carlo coverage validation."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .conformal import ScoreMode, calibrate
from .dataset_io import DetectionDataset, GroundTruthRecord, PredictionRecord, split
from .geometry import Box, iou
from .metrics import coverage
from .pairing import match_dataset

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NoiseModel:
    """How the simulated detector errs.

    Each predicted edge is its true edge plus centred Gaussian noise with
    standard deviation ``edge_noise_scale * size + edge_noise_pixels``,
    where ``size`` is the true width (x edges) or height (y edges).
    Confidence is ``sigmoid(confidence_slope * (iou - confidence_center)
    + confidence_noise * N(0, 1))`` with ``iou`` the overlap with the source
    truth (or the best overlap with any truth for spurious boxes).
    """

    edge_noise_scale: float = 0.1
    edge_noise_pixels: float = 0.0
    miss_rate: float = 0.1
    false_positive_rate: float = 0.5
    confidence_slope: float = 10.0
    confidence_center: float = 0.5
    confidence_noise: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.edge_noise_scale < 0 or self.edge_noise_pixels < 0:
            raise ValueError("noise scales must be non-negative")
        if not 0.0 <= self.miss_rate < 1.0:
            raise ValueError(f"miss_rate must lie in [0, 1), got {self.miss_rate}")
        if self.false_positive_rate < 0:
            raise ValueError("false_positive_rate must be non-negative")
        if self.confidence_slope < 0 or self.confidence_noise < 0:
            raise ValueError("confidence model must be non-decreasing in IoU")

    def confidence(self, overlap, rng: np.random.Generator) -> np.ndarray:
        overlap = np.asarray(overlap, dtype=float)
        z = self.confidence_slope * (overlap - self.confidence_center)
        z = z + self.confidence_noise * rng.standard_normal(overlap.shape)
        return 1.0 / (1.0 + np.exp(-z))


@dataclass(frozen=True)
class GeneratorConfig:
    n_images: int = 200
    boxes_per_image: float = 3.0
    boxes_per_image_dist: str = "poisson"
    frame: Box = Box(0.0, 0.0, 1280.0, 720.0)
    size_range: tuple[float, float] = (20.0, 200.0)
    noise: NoiseModel = field(default_factory=NoiseModel)

    def __post_init__(self):
        if isinstance(self.frame, (list, tuple)):
            object.__setattr__(self, "frame", Box(*self.frame))
        if isinstance(self.noise, dict):
            object.__setattr__(self, "noise", NoiseModel(**self.noise))
        object.__setattr__(self, "size_range", tuple(float(v) for v in self.size_range))

    def with_seed(self, seed: int) -> "GeneratorConfig":
        return replace(self, noise=replace(self.noise, seed=int(seed)))

    def to_json(self) -> dict:
        d = asdict(self)
        d["frame"] = list(self.frame)
        d["size_range"] = list(self.size_range)
        return d

    @classmethod
    def from_json(cls, doc: dict) -> "GeneratorConfig":
        doc = dict(doc)
        if "noise" in doc:
            doc["noise"] = NoiseModel(**doc["noise"])
        if "frame" in doc:
            doc["frame"] = Box(*doc["frame"])
        return cls(**doc)


def _box_counts(config: GeneratorConfig, rng: np.random.Generator) -> np.ndarray:
    if config.boxes_per_image_dist == "poisson":
        return rng.poisson(config.boxes_per_image, size=config.n_images)
    if config.boxes_per_image_dist == "fixed":
        return np.full(config.n_images, int(round(config.boxes_per_image)))
    raise ValueError(f"unknown boxes_per_image_dist {config.boxes_per_image_dist!r}")


def _ordered(lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return np.minimum(lo, hi), np.maximum(lo, hi)


def generate(config: GeneratorConfig) -> DetectionDataset:
    """Draw a synthetic dataset; identical configs give identical datasets.

    Truth boxes are placed uniformly inside ``config.frame`` with width and
    height uniform in ``size_range``. Every truth is detected unless dropped
    with probability ``miss_rate``; Poisson(``false_positive_rate``)
    spurious boxes are added per image.
    """
    frame, noise = config.frame, config.noise
    if not frame.area > 0:
        raise ValueError("frame must have positive area")
    lo, hi = config.size_range
    if not 0 < lo <= hi:
        raise ValueError(f"invalid size range {config.size_range}")
    if hi > frame.width or hi > frame.height:
        raise ValueError(f"size range {config.size_range} does not fit in frame {tuple(frame)}")
    if config.n_images < 0 or config.boxes_per_image < 0:
        raise ValueError("n_images and boxes_per_image must be non-negative")

    rng = np.random.default_rng(noise.seed)
    counts = _box_counts(config, rng)
    image_w, image_h = int(math.ceil(frame.x_max)), int(math.ceil(frame.y_max))
    records = []
    for image_id, n in enumerate(counts):
        w = rng.uniform(lo, hi, n)
        h = rng.uniform(lo, hi, n)
        x0 = frame.x_min + rng.uniform(0.0, 1.0, n) * (frame.width - w)
        y0 = frame.y_min + rng.uniform(0.0, 1.0, n) * (frame.height - h)
        truths = np.stack([x0, y0, x0 + w, y0 + h], axis=1)

        detected = rng.random(n) >= noise.miss_rate
        sd = np.stack([w, h, w, h], axis=1) * noise.edge_noise_scale + noise.edge_noise_pixels
        pred = truths + sd * rng.standard_normal((n, 4))
        pred[:, 0], pred[:, 2] = _ordered(pred[:, 0], pred[:, 2])
        pred[:, 1], pred[:, 3] = _ordered(pred[:, 1], pred[:, 3])
        pred = pred[detected]
        truth_boxes = [Box(*map(float, t)) for t in truths]
        pred_boxes = [Box(*map(float, p)) for p in pred]
        overlaps = [iou(p, t) for p, t in zip(pred_boxes, np.asarray(truth_boxes, dtype=object)[detected])]

        n_fp = rng.poisson(noise.false_positive_rate)
        fw = rng.uniform(lo, hi, n_fp)
        fh = rng.uniform(lo, hi, n_fp)
        fx = frame.x_min + rng.uniform(0.0, 1.0, n_fp) * (frame.width - fw)
        fy = frame.y_min + rng.uniform(0.0, 1.0, n_fp) * (frame.height - fh)
        for b in np.stack([fx, fy, fx + fw, fy + fh], axis=1):
            fp = Box(*map(float, b))
            pred_boxes.append(fp)
            overlaps.append(max((iou(fp, t) for t in truth_boxes), default=0.0))

        conf = noise.confidence(overlaps, rng) if pred_boxes else []
        records.append((
            GroundTruthRecord(image_id, tuple(truth_boxes), image_w, image_h),
            PredictionRecord(image_id, tuple(zip(pred_boxes, map(float, conf)))),
        ))
    return DetectionDataset(tuple(records))


@dataclass(frozen=True)
class MonteCarloReport:
    repetitions: int
    alpha: float
    mode: ScoreMode
    per_rep_coverage: tuple[float, ...]
    mean_coverage: float
    std_coverage: float
    per_rep_margins: tuple[tuple[float, float, float, float], ...] = ()
    per_rep_stretch: tuple[float, ...] = ()
    per_rep_n_box: tuple[int, ...] = ()
    n_excluded: int = 0

    @property
    def mc_error(self) -> float:
        """Three standard errors of the mean coverage."""
        n = len(self.per_rep_coverage)
        return 3.0 * self.std_coverage / math.sqrt(n) if n else math.nan

    @property
    def mean_stretch(self) -> float:
        return float(np.mean(self.per_rep_stretch)) if self.per_rep_stretch else math.nan

    @property
    def mean_margins(self) -> tuple[float, ...]:
        if not self.per_rep_margins:
            return (math.nan,) * 4
        return tuple(float(v) for v in np.mean(self.per_rep_margins, axis=0))

    def to_json(self) -> dict:
        d = asdict(self)
        d["mode"] = ScoreMode(self.mode).value
        d["mean_stretch"] = self.mean_stretch
        d["mean_margins"] = list(self.mean_margins)
        d["mc_error"] = self.mc_error
        return d


def _one_repetition(args):
    config, fixed, alpha, mode, cal_fraction, iou_threshold, clamp_boxes, rep_seed = args
    dataset = fixed if fixed is not None else generate(config.with_seed(rep_seed))
    n_cal = int(round(cal_fraction * len(dataset)))
    _, cal, test = split(dataset, (0, n_cal, len(dataset) - n_cal), seed=rep_seed)
    margins = calibrate(match_dataset(cal, iou_threshold).pairs, alpha, mode, iou_threshold)
    test_pairs = match_dataset(test, iou_threshold).pairs
    if margins.unbounded or not test_pairs:
        return None
    report = coverage(test_pairs, margins, test.frames() if clamp_boxes else None)
    return report.empirical_coverage, margins.q, report.stretch, margins.n_box


def monte_carlo_coverage(config: GeneratorConfig, alpha: float, mode: ScoreMode | str,
                         repetitions: int = 100, cal_fraction: float = 0.5,
                         iou_threshold: float = 0.5, resample: str = "generate",
                         clamp: bool = False, n_jobs: int = 1) -> MonteCarloReport:
    """Repeat calibrate-then-test on synthetic data and collect coverages.

    Repetition ``r`` uses seed ``config.noise.seed + r`` both for the data
    (``resample="generate"``) and for the calibration/test split. With
    ``resample="resplit"`` one dataset is drawn from the base seed and only
    re-split. Repetitions whose margins are unbounded, or whose test part
    has no matched pair, are dropped and counted in ``n_excluded``.
    """
    mode = ScoreMode(mode)
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if not 0.0 < cal_fraction < 1.0:
        raise ValueError("cal_fraction must lie in (0, 1)")
    if resample not in ("generate", "resplit"):
        raise ValueError(f"unknown resample strategy {resample!r}")
    fixed = generate(config) if resample == "resplit" else None
    base = config.noise.seed
    jobs = [(config, fixed, alpha, mode, cal_fraction, iou_threshold, clamp, base + r)
            for r in range(repetitions)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_one_repetition, jobs))
    else:
        results = [_one_repetition(j) for j in jobs]

    kept = [r for r in results if r is not None]
    n_excluded = len(results) - len(kept)
    if n_excluded:
        logger.warning("%d of %d repetitions excluded (unbounded margins or no test pairs)",
                       n_excluded, repetitions)
    cov = np.array([r[0] for r in kept])
    return MonteCarloReport(
        repetitions=repetitions,
        alpha=alpha,
        mode=mode,
        per_rep_coverage=tuple(float(c) for c in cov),
        mean_coverage=float(cov.mean()) if kept else math.nan,
        std_coverage=float(cov.std(ddof=1)) if len(kept) > 1 else 0.0,
        per_rep_margins=tuple(tuple(float(v) for v in r[1]) for r in kept),
        per_rep_stretch=tuple(float(r[2]) for r in kept),
        per_rep_n_box=tuple(int(r[3]) for r in kept),
        n_excluded=n_excluded,
    )
