"""Conformal bounding boxes: split conformal margins for object detectors."""

from .conformal import (
    DegenerateBoxError,
    MarginSet,
    ScoreMode,
    ScoreVector,
    UnboundedMarginsError,
    calibrate,
    conformal_quantile,
    conformalize,
    score,
)
from .dataset_io import (
    DatasetFormatError,
    DetectionDataset,
    GroundTruthRecord,
    PredictionRecord,
    join,
    load_ground_truth,
    load_predictions,
    split,
)
from .geometry import Box, clamp, contains, iou
from .metrics import CoverageReport, PrecisionRecallCurve, average_precision, coverage, stretch
from .pairing import MatchedPair, MatchReport, match_dataset, match_image
from .synthetic import GeneratorConfig, MonteCarloReport, NoiseModel, generate, monte_carlo_coverage

__version__ = "0.1.0"
